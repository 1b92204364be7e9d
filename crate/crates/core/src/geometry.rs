//! Wasserstein distances, Gaussian entropies and a numerical check of the
//! bound `|KL(P||M0) - KL(Q||M0)| <= c W2(P, Q) + |h(Q) - h(P)|` with
//! `M0 = (P + Q)/2 * N(0, sigma2 I)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::base_measure::symmetric_base;
use crate::convex::ConvexGenerator;
use crate::divergence::{scaled_bregman, BaseDensity};
use crate::error::{invalid, Error, Result};
use crate::measures::{Gaussian, Measure, QuadratureGrid};
use crate::rng::stream;
use crate::sample_table::SampleTable;

/// Sample size for the `E||U||`, `E||V||` estimates in the constant.
pub const NORM_MC_SAMPLES: usize = 100_000;

/// Nodes per axis for one-dimensional left-hand sides.
const LHS_QUADRATURE_POINTS: usize = 8192;

fn as_gaussian(m: &Measure) -> Result<&Gaussian> {
    match m {
        Measure::Gaussian(g) => Ok(g),
        other => Err(Error::Unsupported(format!(
            "closed form needs a gaussian measure, got {}",
            other.kind()
        ))),
    }
}

/// Symmetric PSD square root; tiny negative eigenvalues from rounding are
/// treated as zero.
fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let s = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}

/// Closed-form W2 between Gaussians (Bures metric on covariances).
pub fn w2_gaussian(p: &Measure, q: &Measure) -> Result<f64> {
    let (a, b) = (as_gaussian(p)?, as_gaussian(q)?);
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mean_term = (a.mean() - b.mean()).norm_squared();
    let root_b = psd_sqrt(b.cov());
    let cross = psd_sqrt(&(&root_b * a.cov() * &root_b));
    let cov_term = (a.cov() + b.cov() - cross * 2.0).trace();
    Ok((mean_term + cov_term.max(0.0)).sqrt())
}

/// W2 between two one-dimensional empirical measures.
///
/// Equal sizes pair sorted samples. Unequal sizes integrate the squared
/// difference of the two quantile functions exactly over the merged
/// breakpoints `i / n_a` and `j / n_b`.
pub fn w2_empirical_1d(a: &SampleTable, b: &SampleTable) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("samples", "both samples must be nonempty"));
    }
    if a.dim() != 1 || b.dim() != 1 {
        return Err(invalid("samples", "one-dimensional samples required"));
    }
    let sorted = |t: &SampleTable| {
        let mut v = t.as_slice().to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (xa, xb) = (sorted(a), sorted(b));
    let (na, nb) = (xa.len(), xb.len());
    if na == nb {
        let s: f64 = xa.iter().zip(&xb).map(|(u, v)| (u - v) * (u - v)).sum();
        return Ok((s / na as f64).sqrt());
    }
    // walk the merged grid of quantile breakpoints in integer units of 1/(na nb)
    let (mut i, mut j, mut at, mut acc) = (0usize, 0usize, 0usize, 0.0);
    let total = na * nb;
    while at < total {
        let next = ((i + 1) * nb).min((j + 1) * na);
        let d = xa[i] - xb[j];
        acc += d * d * (next - at) as f64;
        at = next;
        if at == (i + 1) * nb {
            i += 1;
        }
        if at == (j + 1) * na {
            j += 1;
        }
    }
    Ok((acc / total as f64).sqrt())
}

/// Differential entropy `(d/2) log(2 pi e) + (1/2) log det Sigma`.
pub fn entropy_gaussian(p: &Measure) -> Result<f64> {
    let g = as_gaussian(p)?;
    let d = g.dim() as f64;
    Ok(0.5 * d * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + 0.5 * g.log_det_cov())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LhsMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    /// `|KL(P||M0) - KL(Q||M0)|`.
    pub lhs: f64,
    /// Standard error of `lhs`; zero for quadrature.
    pub lhs_se: f64,
    pub lhs_method: LhsMethod,
    pub w2: f64,
    pub entropy_gap: f64,
    pub mean_norm_p: f64,
    pub mean_norm_q: f64,
    pub c: f64,
    pub rhs: f64,
    pub slack: f64,
    pub sigma2: f64,
    /// `lhs <= rhs + 3 lhs_se`.
    pub holds: bool,
}

/// `E||X||` for `X ~ g` from [`NORM_MC_SAMPLES`] draws of `stream(seed, index)`.
fn mean_norm(g: &Gaussian, seed: u64, index: u64) -> f64 {
    let mut rng = stream(seed, index);
    let d = g.dim();
    let (mut z, mut x) = (vec![0.0; d], vec![0.0; d]);
    let mut acc = 0.0;
    for _ in 0..NORM_MC_SAMPLES {
        z.iter_mut()
            .for_each(|v| *v = StandardNormal.sample(&mut rng));
        g.transform_into(&z, &mut x);
        acc += x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    acc / NORM_MC_SAMPLES as f64
}

/// Evaluates both sides of the bound for Gaussian `P`, `Q`.
///
/// The norm expectations use streams that do not depend on `sigma2`, so
/// `c * sigma2` is identical across noise levels for one seed. The
/// Monte-Carlo left-hand side pairs `U ~ P` and `V ~ Q` through shared
/// standard-normal draws.
pub fn verify_prop1(
    p: &Measure,
    q: &Measure,
    sigma2: f64,
    n_mc: usize,
    seed: u64,
) -> Result<Prop1Report> {
    let (gp, gq) = (as_gaussian(p)?, as_gaussian(q)?);
    if gp.dim() != gq.dim() {
        return Err(Error::DimensionMismatch {
            expected: gp.dim(),
            got: gq.dim(),
        });
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(invalid("sigma2", "must be positive"));
    }
    if n_mc < 10_000 {
        return Err(invalid("n_mc", "need at least 10^4 Monte-Carlo samples"));
    }
    let m0 = symmetric_base(p, q, sigma2)?.measure().clone();
    let d = gp.dim();
    let (lhs, lhs_se, lhs_method) = if d == 1 {
        let grid = QuadratureGrid::for_measures(&[p, q, &m0], LHS_QUADRATURE_POINTS)?;
        let f = ConvexGenerator::TLogT;
        let base = BaseDensity::Measure(&m0);
        let kp = scaled_bregman(&f, p, &m0, base, &grid)?;
        let kq = scaled_bregman(&f, q, &m0, base, &grid)?;
        ((kp - kq).abs(), 0.0, LhsMethod::Quadrature)
    } else {
        let mut rng = stream(seed, 0);
        let (mut z, mut u, mut v) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut diffs = Vec::with_capacity(n_mc);
        for _ in 0..n_mc {
            z.iter_mut()
                .for_each(|x| *x = StandardNormal.sample(&mut rng));
            gp.transform_into(&z, &mut u);
            gq.transform_into(&z, &mut v);
            let a = gp.log_density(&u) - m0.density(&u)?.ln();
            let b = gq.log_density(&v) - m0.density(&v)?.ln();
            diffs.push(a - b);
        }
        let mean = crate::stats::mean(&diffs);
        (
            mean.abs(),
            crate::stats::std_error(&diffs),
            LhsMethod::MonteCarlo,
        )
    };
    let w2 = w2_gaussian(p, q)?;
    let entropy_gap = (entropy_gaussian(q)? - entropy_gaussian(p)?).abs();
    let (mean_norm_p, mean_norm_q) = (mean_norm(gp, seed, 1), mean_norm(gq, seed, 2));
    let c = 11.0 / (2.0 * sigma2) * (mean_norm_p + mean_norm_q);
    let rhs = c * w2 + entropy_gap;
    let report = Prop1Report {
        lhs,
        lhs_se,
        lhs_method,
        w2,
        entropy_gap,
        mean_norm_p,
        mean_norm_q,
        c,
        rhs,
        slack: rhs - lhs,
        sigma2,
        holds: lhs <= rhs + 3.0 * lhs_se,
    };
    if [report.lhs, report.lhs_se, report.w2, report.c, report.rhs]
        .iter()
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("bound report"));
    }
    Ok(report)
}
