//! Density-ratio estimation.
//!
//! Two routes estimate `r = p / q` from samples: a closed-form kernel solve
//! and a logistic discriminator. Analytic and unit models stand in when the
//! densities are known. Every model clamps its output into
//! `[RATIO_FLOOR, 1 / RATIO_FLOOR]`.
//!
//! Kernel convention: with numerator sample `x` (size `n_p`) and
//! denominator sample `z` (size `n_q`), the weights solve
//! `(K_zz + lambda I) w = (n_q / n_p) K_zx 1`, so `w ~ 1` when `p = q`.
//! They are the ratio values at the denominator points. Away from `z` the
//! ratio is the kernel-weighted average of the (clamped) weights.
//!
//! Discriminator convention: label 1 means "drawn from p", so the logit
//! `C(x)` estimates `log r(x)` and `r = exp(C)`.

mod discriminator;
mod kernel;

pub use discriminator::{fit_discriminator_ratio, fit_discriminator_warm, DiscriminatorSpec};
pub use kernel::{gram, median_heuristic, rbf, Bandwidth, KernelSpec, KernelSystem};

use crate::error::{Error, Result};
use crate::measures::Measure;
use crate::nn::Mlp;
use crate::sample_table::{sq_dist, SampleTable};

pub const RATIO_FLOOR: f64 = 1e-6;

pub fn clamp_ratio(r: f64) -> f64 {
    crate::convex::clamp_ratio(r, RATIO_FLOOR)
}

#[derive(Debug, Clone)]
pub enum RatioModel {
    Kernel {
        support: SampleTable,
        bandwidth: f64,
        /// Solution of the regularized system before clamping.
        raw: Vec<f64>,
        weights: Vec<f64>,
    },
    Logistic {
        net: Mlp,
        params: Vec<f64>,
    },
    /// Exact `num / den` from closed-form densities.
    Analytic {
        num: Measure,
        den: Measure,
    },
    /// `r = 1`.
    Unit,
}

impl RatioModel {
    pub fn kernel(support: SampleTable, bandwidth: f64, raw: Vec<f64>) -> Self {
        let weights = raw.iter().map(|w| clamp_ratio(*w)).collect();
        RatioModel::Kernel {
            support,
            bandwidth,
            raw,
            weights,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RatioModel::Kernel { .. } => "mmd",
            RatioModel::Logistic { .. } => "discriminator",
            RatioModel::Analytic { .. } => "exact",
            RatioModel::Unit => "unit",
        }
    }

    /// Clamped ratio values at the denominator points of a kernel model.
    pub fn support_values(&self) -> Option<&[f64]> {
        match self {
            RatioModel::Kernel { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Discriminator logit `C(x)`; `None` for other kinds.
    pub fn logit(&self, x: &[f64]) -> Option<f64> {
        match self {
            RatioModel::Logistic { net, params } => {
                let mut o = [0.0];
                net.forward(params, x, &mut o);
                Some(o[0])
            }
            _ => None,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let r = match self {
            RatioModel::Kernel {
                support,
                bandwidth,
                weights,
                ..
            } => {
                if x.len() != support.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: support.dim(),
                        got: x.len(),
                    });
                }
                let (k, s) = shifted_kernel_row(x, support, *bandwidth);
                k.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() / s
            }
            RatioModel::Logistic { .. } => self.logit(x).unwrap().exp(),
            RatioModel::Analytic { num, den } => num.density(x)? / den.density(x)?,
            RatioModel::Unit => 1.0,
        };
        Ok(clamp_ratio(r))
    }

    pub fn evaluate_table(&self, xs: &SampleTable) -> Result<Vec<f64>> {
        xs.rows().map(|x| self.evaluate(x)).collect()
    }
}

/// Kernel row `k(x, z_j) * exp(d_min / 2h^2)` and its sum.
///
/// Shifting by the nearest distance leaves normalized averages unchanged and
/// keeps the sum at least 1, so points far from the support never divide by
/// an underflowed zero.
pub fn shifted_kernel_row(x: &[f64], support: &SampleTable, h: f64) -> (Vec<f64>, f64) {
    let d: Vec<f64> = support.rows().map(|z| sq_dist(x, z)).collect();
    let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let k: Vec<f64> = d
        .iter()
        .map(|di| (-(di - dmin) / (2.0 * h * h)).exp())
        .collect();
    let s = k.iter().sum();
    (k, s)
}

fn check_pair(a: &SampleTable, b: &SampleTable) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(crate::error::invalid(
            "samples",
            "both samples must be nonempty",
        ));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Kernel estimate of `p / q` from `samples_num ~ p` and `samples_den ~ q`.
pub fn fit_mmd_ratio(
    samples_num: &SampleTable,
    samples_den: &SampleTable,
    kernel: &KernelSpec,
) -> Result<RatioModel> {
    kernel.validate()?;
    check_pair(samples_num, samples_den)?;
    let h = kernel.resolve_bandwidth(&[samples_num, samples_den])?;
    let sys = KernelSystem::new(samples_den.clone(), h, kernel.lambda)?;
    let w = sys.solve(&sys.embed(samples_num)?)?;
    Ok(RatioModel::kernel(
        samples_den.clone(),
        h,
        w.iter().copied().collect(),
    ))
}

/// Two kernel ratios `a / m` and `b / m` over one shared denominator sample,
/// factorizing the Gram system once.
pub fn fit_mmd_ratio_pair(
    num_a: &SampleTable,
    num_b: &SampleTable,
    den: &SampleTable,
    bandwidth: f64,
    lambda: f64,
) -> Result<(RatioModel, RatioModel)> {
    check_pair(num_a, den)?;
    check_pair(num_b, den)?;
    let sys = KernelSystem::new(den.clone(), bandwidth, lambda)?;
    let wa = sys.solve(&sys.embed(num_a)?)?;
    let wb = sys.solve(&sys.embed(num_b)?)?;
    Ok((
        RatioModel::kernel(den.clone(), bandwidth, wa.iter().copied().collect()),
        RatioModel::kernel(den.clone(), bandwidth, wb.iter().copied().collect()),
    ))
}
