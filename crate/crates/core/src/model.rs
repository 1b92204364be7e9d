//! Parametric generators `G_phi: R^k -> R^d` and the measures they induce.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::Measure;
use crate::nn::Mlp;
use crate::rng::Rng;
use crate::sample_table::SampleTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorFamily {
    /// `x = lo + (hi - lo) * u + theta * e_axis`, `u ~ Uniform[0,1]^d`.
    /// One parameter, the location offset along `axis`.
    UniformShift {
        lo: Vec<f64>,
        hi: Vec<f64>,
        #[serde(default)]
        axis: usize,
    },
    /// `x = A z + b`, `z ~ N(0, I_k)`; parameters are `A` row-major then `b`.
    Affine { k: usize, d: usize },
    /// Tanh network on `z ~ N(0, I_k)`.
    Mlp {
        k: usize,
        d: usize,
        hidden: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    family: GeneratorFamily,
    net: Option<Mlp>,
}

impl GeneratorModel {
    pub fn new(family: GeneratorFamily) -> Result<Self> {
        let net = match &family {
            GeneratorFamily::UniformShift { lo, hi, axis } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(invalid(
                        "generator.lo",
                        "lo and hi need equal, positive length",
                    ));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
                    return Err(invalid("generator.hi", "every axis needs lo < hi"));
                }
                if *axis >= lo.len() {
                    return Err(invalid("generator.axis", "axis out of range"));
                }
                None
            }
            GeneratorFamily::Affine { k, d } => Some(Mlp::new(vec![*k, *d])?),
            GeneratorFamily::Mlp { k, d, hidden } => {
                let mut sizes = vec![*k];
                sizes.extend(hidden);
                sizes.push(*d);
                Some(Mlp::new(sizes)?)
            }
        };
        Ok(Self { family, net })
    }

    pub fn family(&self) -> &GeneratorFamily {
        &self.family
    }

    pub fn param_count(&self) -> usize {
        match &self.net {
            Some(n) => n.param_count(),
            None => 1,
        }
    }

    pub fn noise_dim(&self) -> usize {
        match &self.family {
            GeneratorFamily::UniformShift { lo, .. } => lo.len(),
            GeneratorFamily::Affine { k, .. } | GeneratorFamily::Mlp { k, .. } => *k,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.family {
            GeneratorFamily::UniformShift { lo, .. } => lo.len(),
            GeneratorFamily::Affine { d, .. } | GeneratorFamily::Mlp { d, .. } => *d,
        }
    }

    /// Default starting point: zero shift, identity-like affine map, random
    /// network weights.
    pub fn init_params(&self, rng: &mut Rng) -> Vec<f64> {
        match (&self.family, &self.net) {
            (GeneratorFamily::Affine { k, d }, _) => {
                let mut p = vec![0.0; k * d + d];
                for i in 0..(*k).min(*d) {
                    p[i * k + i] = 1.0;
                }
                p
            }
            (_, Some(net)) => net.init(rng),
            (_, None) => vec![0.0],
        }
    }

    pub fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        Ok(())
    }

    pub fn noise_point(&self, rng: &mut Rng, out: &mut [f64]) {
        match &self.family {
            GeneratorFamily::UniformShift { .. } => out.iter_mut().for_each(|o| *o = rng.random()),
            _ => out.iter_mut().for_each(|o| *o = StandardNormal.sample(rng)),
        }
    }

    pub fn draw_noise(&self, n: usize, rng: &mut Rng) -> SampleTable {
        let mut t = SampleTable::zeros(n, self.noise_dim());
        for i in 0..n {
            self.noise_point(rng, t.row_mut(i));
        }
        t
    }

    pub fn generate_point(&self, params: &[f64], z: &[f64], out: &mut [f64]) {
        match (&self.family, &self.net) {
            (GeneratorFamily::UniformShift { lo, hi, axis }, _) => {
                for i in 0..lo.len() {
                    out[i] = lo[i] + (hi[i] - lo[i]) * z[i];
                }
                out[*axis] += params[0];
            }
            (_, Some(net)) => net.forward(params, z, out),
            (_, None) => unreachable!("network families always carry a network"),
        }
    }

    pub fn generate(&self, params: &[f64], noise: &SampleTable) -> SampleTable {
        let mut out = SampleTable::zeros(noise.len(), self.dim());
        for (i, z) in noise.rows().enumerate() {
            self.generate_point(params, z, out.row_mut(i));
        }
        out
    }

    /// Accumulates `(dG(z)/dphi)^T gout` into `gparams`.
    pub fn vjp(&self, params: &[f64], z: &[f64], gout: &[f64], gparams: &mut [f64]) {
        match (&self.family, &self.net) {
            (GeneratorFamily::UniformShift { axis, .. }, _) => gparams[0] += gout[*axis],
            (_, Some(net)) => net.vjp(params, z, gout, gparams, None),
            (_, None) => unreachable!("network families always carry a network"),
        }
    }

    /// The induced measure `q_phi` when it has a closed form: a shifted box,
    /// or `N(b, A A^T)` for a full-rank affine map.
    pub fn pushforward(&self, params: &[f64]) -> Result<Measure> {
        self.check_params(params)?;
        match &self.family {
            GeneratorFamily::UniformShift { lo, hi, axis } => {
                let mut lo = lo.clone();
                let mut hi = hi.clone();
                lo[*axis] += params[0];
                hi[*axis] += params[0];
                Measure::uniform(lo, hi)
            }
            GeneratorFamily::Affine { k, d } => {
                let a = DMatrix::from_row_slice(*d, *k, &params[..k * d]);
                let cov = &a * a.transpose();
                Measure::gaussian(params[k * d..].to_vec(), cov).map_err(|_| {
                    Error::Unsupported("affine generator is rank deficient; no density".into())
                })
            }
            GeneratorFamily::Mlp { .. } => Err(Error::Unsupported(
                "network generators have no closed-form density".into(),
            )),
        }
    }
}
