//! Noisy mixture base measures `alpha (P * N(0, S1)) + (1 - alpha) (Q * N(0, S2))`.
//!
//! Convolution gives the base full support, so ratios against it stay finite
//! even when `P` and `Q` have disjoint supports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::convex::ConvexGenerator;
use crate::divergence::{f_divergence_terms, scaled_bregman_parts, BaseDensity};
use crate::error::{invalid, Result};
use crate::measures::{convolve_gaussian, Measure, QuadratureGrid};
use crate::rng::Rng;
use crate::sample_table::SampleTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseMode {
    /// Both arguments have densities; the base density is available.
    Analytic,
    /// At least one argument is sample-backed; only sampling is allowed.
    Empirical,
}

#[derive(Debug, Clone)]
pub struct NoisyBase {
    alpha: f64,
    cov1: DMatrix<f64>,
    cov2: DMatrix<f64>,
    mode: BaseMode,
    measure: Measure,
}

pub fn build_noisy_base(
    p: &Measure,
    q: &Measure,
    alpha: f64,
    cov1: DMatrix<f64>,
    cov2: DMatrix<f64>,
) -> Result<NoisyBase> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(
            "base.alpha",
            format!("must lie in [0, 1], got {alpha}"),
        ));
    }
    if p.dim() != q.dim() {
        return Err(crate::Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let measure = Measure::mixture(
        vec![alpha, 1.0 - alpha],
        vec![
            convolve_gaussian(p, cov1.clone())?,
            convolve_gaussian(q, cov2.clone())?,
        ],
    )?;
    let mode = if p.is_analytic() && q.is_analytic() {
        BaseMode::Analytic
    } else {
        BaseMode::Empirical
    };
    Ok(NoisyBase {
        alpha,
        cov1,
        cov2,
        mode,
        measure,
    })
}

/// Isotropic convenience form with noise variances `var1`, `var2`.
pub fn build_isotropic_base(
    p: &Measure,
    q: &Measure,
    alpha: f64,
    var1: f64,
    var2: f64,
) -> Result<NoisyBase> {
    let d = p.dim();
    build_noisy_base(
        p,
        q,
        alpha,
        DMatrix::identity(d, d) * var1,
        DMatrix::identity(d, d) * var2,
    )
}

/// `(P + Q)/2 * N(0, sigma2 I)`.
pub fn symmetric_base(p: &Measure, q: &Measure, sigma2: f64) -> Result<NoisyBase> {
    build_isotropic_base(p, q, 0.5, sigma2, sigma2)
}

impl NoisyBase {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cov1(&self) -> &DMatrix<f64> {
        &self.cov1
    }

    pub fn cov2(&self) -> &DMatrix<f64> {
        &self.cov2
    }

    pub fn mode(&self) -> BaseMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }

    /// The base as a mixture of convolved measures.
    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    /// Errors in empirical mode.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.measure.density(x)
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<SampleTable> {
        self.measure.sample(n, rng)
    }
}

/// One row of a support-signal sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSignalRow {
    pub theta: f64,
    pub gap: f64,
    pub f_divergence: f64,
    pub f_divergence_grad: f64,
    pub scaled_bregman: f64,
    pub scaled_bregman_grad: f64,
}

/// Settings for [`support_signal_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSignalSpec {
    pub alpha: f64,
    pub sigma2: f64,
    /// Generator of the f-divergence column.
    pub f_divergence: ConvexGenerator,
    /// Generator of the scaled-Bregman column.
    pub f_bregman: ConvexGenerator,
    pub fd_step: f64,
    pub points: usize,
}

/// Values and centered-difference `|d/dtheta|` of the f-divergence and of
/// the scaled Bregman divergence against the rebuilt base, per theta.
///
/// Each difference is taken on one fixed grid covering both perturbed
/// configurations and summed node by node, so that large clamped terms
/// cancel exactly.
pub fn support_signal_check(
    p: &Measure,
    family: impl Fn(f64) -> Result<Measure>,
    gap: impl Fn(f64) -> f64,
    thetas: &[f64],
    spec: &SupportSignalSpec,
) -> Result<Vec<SupportSignalRow>> {
    if !(spec.fd_step > 0.0) {
        return Err(invalid("fd_step", "must be positive"));
    }
    let mut rows = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let h = spec.fd_step;
        let qs = [family(theta - h)?, family(theta)?, family(theta + h)?];
        let bases = qs
            .iter()
            .map(|q| build_isotropic_base(p, q, spec.alpha, spec.sigma2, spec.sigma2))
            .collect::<Result<Vec<_>>>()?;
        let grid = QuadratureGrid::for_measures(
            &[p, bases[0].measure(), bases[2].measure()],
            spec.points,
        )?;
        let fd_terms = |q: &Measure| f_divergence_terms(&spec.f_divergence, p, q, &grid);
        let sb_terms = |q: &Measure, b: &NoisyBase| {
            scaled_bregman_parts(
                &spec.f_bregman,
                p,
                q,
                BaseDensity::Measure(b.measure()),
                &grid,
            )
        };
        let diff = |a: Vec<f64>, b: Vec<f64>| -> f64 {
            a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / (2.0 * h)
        };
        let f_val: f64 = fd_terms(&qs[1])?.iter().sum();
        let f_grad = diff(fd_terms(&qs[2])?, fd_terms(&qs[0])?);
        let s_val = sb_terms(&qs[1], &bases[1])?.total();
        let s_grad =
            sb_terms(&qs[2], &bases[2])?.difference(&sb_terms(&qs[0], &bases[0])?) / (2.0 * h);
        rows.push(SupportSignalRow {
            theta,
            gap: gap(theta),
            f_divergence: f_val,
            f_divergence_grad: f_grad.abs(),
            scaled_bregman: s_val,
            scaled_bregman_grad: s_grad.abs(),
        });
    }
    Ok(rows)
}
