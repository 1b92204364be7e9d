use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sample_table::{sq_dist, SampleTable};

/// Gaussian RBF bandwidth: a fixed length scale or the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BandwidthRepr", into = "BandwidthRepr")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance over the pooled samples.
    Median,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BandwidthRepr {
    Value(f64),
    Name(String),
}

impl TryFrom<BandwidthRepr> for Bandwidth {
    type Error = String;
    fn try_from(r: BandwidthRepr) -> std::result::Result<Self, String> {
        match r {
            BandwidthRepr::Value(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
            BandwidthRepr::Value(h) => Err(format!("bandwidth must be positive, got {h}")),
            BandwidthRepr::Name(s) if s == "median-heuristic" || s == "median" => {
                Ok(Bandwidth::Median)
            }
            BandwidthRepr::Name(s) => Err(format!(
                "bandwidth must be a number or \"median-heuristic\", got \"{s}\""
            )),
        }
    }
}

impl From<Bandwidth> for BandwidthRepr {
    fn from(b: Bandwidth) -> Self {
        match b {
            Bandwidth::Fixed(h) => BandwidthRepr::Value(h),
            Bandwidth::Median => BandwidthRepr::Name("median-heuristic".into()),
        }
    }
}

/// Gaussian RBF kernel `exp(-|x - y|^2 / (2 h^2))` with a ridge.
///
/// The ridge is relative: the system solved is `K + lambda * tr(K)/n * I`.
/// RBF Gram matrices have unit diagonal, so this is `K + lambda I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    pub bandwidth: Bandwidth,
    pub lambda: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Median,
            lambda: 1e-3,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(
                "dre.lambda",
                "ridge must be finite and nonnegative",
            ));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0) {
                return Err(invalid("dre.bandwidth", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn resolve_bandwidth(&self, pooled: &[&SampleTable]) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(h) => Ok(h),
            Bandwidth::Median => median_heuristic(pooled),
        }
    }
}

/// Pooled points used by the median heuristic are capped at this count,
/// taken at an even stride.
const MEDIAN_POOL: usize = 1000;

pub fn median_heuristic(tables: &[&SampleTable]) -> Result<f64> {
    let total: usize = tables.iter().map(|t| t.len()).sum();
    if total < 2 {
        return Err(invalid(
            "samples",
            "median heuristic needs at least two points",
        ));
    }
    let stride = total.div_ceil(MEDIAN_POOL);
    let pts: Vec<&[f64]> = tables
        .iter()
        .flat_map(|t| t.rows())
        .step_by(stride)
        .collect();
    let mut d: Vec<f64> = Vec::with_capacity(pts.len() * (pts.len() - 1) / 2);
    for i in 0..pts.len() {
        for j in 0..i {
            d.push(sq_dist(pts[i], pts[j]));
        }
    }
    let h = crate::stats::median(&mut d).sqrt();
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid("samples", "median heuristic gave a zero bandwidth"));
    }
    Ok(h)
}

pub fn rbf(a: &[f64], b: &[f64], h: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * h * h)).exp()
}

/// Gram matrix `K[i][j] = k(a_i, b_j)`.
pub fn gram(a: &SampleTable, b: &SampleTable, h: f64) -> DMatrix<f64> {
    let (n, m) = (a.len(), b.len());
    let row = |i: usize| -> Vec<f64> { b.rows().map(|y| rbf(a.row(i), y, h)).collect() };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..n).map(row).collect();
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Factorized `K_zz + ridge I` over a fixed denominator sample `z`.
#[derive(Debug, Clone)]
pub struct KernelSystem {
    support: SampleTable,
    bandwidth: f64,
    ridge: f64,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl KernelSystem {
    pub fn new(support: SampleTable, bandwidth: f64, lambda: f64) -> Result<Self> {
        if support.is_empty() {
            return Err(invalid("samples_den", "denominator sample is empty"));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(invalid("bandwidth", "must be positive and finite"));
        }
        let n = support.len();
        let gram = gram(&support, &support, bandwidth);
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel Gram matrix"));
        }
        let ridge = lambda * gram.trace() / n as f64;
        let mut a = gram.clone();
        for i in 0..n {
            a[(i, i)] += ridge;
        }
        let chol = Cholesky::new(a).ok_or(Error::SingularSystem { ridge })?;
        if lambda == 0.0 {
            let l = chol.l_dirty();
            let diag: Vec<f64> = (0..n).map(|i| l[(i, i)] * l[(i, i)]).collect();
            let max = diag.iter().cloned().fold(0.0, f64::max);
            let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            if min <= 1e-13 * max {
                return Err(Error::SingularSystem { ridge });
            }
        }
        Ok(Self {
            support,
            bandwidth,
            ridge,
            gram,
            chol,
        })
    }

    pub fn support(&self) -> &SampleTable {
        &self.support
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `(n_den / n_num) K_{z,num} 1`.
    pub fn embed(&self, num: &SampleTable) -> Result<DVector<f64>> {
        if num.is_empty() {
            return Err(invalid("samples_num", "numerator sample is empty"));
        }
        if num.dim() != self.support.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.support.dim(),
                got: num.dim(),
            });
        }
        let s = self.support.len() as f64 / num.len() as f64;
        let k = gram(&self.support, num, self.bandwidth);
        Ok(DVector::from_iterator(
            self.support.len(),
            k.row_iter().map(|r| s * r.sum()),
        ))
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let w = self.chol.solve(rhs);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel ratio weights"));
        }
        Ok(w)
    }
}
