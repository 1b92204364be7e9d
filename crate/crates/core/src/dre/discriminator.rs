use serde::{Deserialize, Serialize};

use super::RatioModel;
use crate::error::{invalid, Error, Result};
use crate::nn::Mlp;
use crate::optim::{Optimizer, OptimizerSpec};
use crate::rng::Rng;
use crate::sample_table::SampleTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorSpec {
    /// Hidden widths; empty means a linear logit.
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub lr: f64,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            steps: 200,
            lr: 0.05,
        }
    }
}

impl DiscriminatorSpec {
    pub fn network(&self, dim: usize) -> Result<Mlp> {
        let mut sizes = vec![dim];
        sizes.extend(&self.hidden);
        sizes.push(1);
        Mlp::new(sizes)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logistic discriminator between `samples_p` (label 1) and `samples_q`
/// (label 0), trained from a random start.
pub fn fit_discriminator_ratio(
    samples_p: &SampleTable,
    samples_q: &SampleTable,
    spec: &DiscriminatorSpec,
    rng: &mut Rng,
) -> Result<RatioModel> {
    let net = spec.network(samples_p.dim())?;
    let init = net.init(rng);
    fit_discriminator_warm(samples_p, samples_q, spec, init)
}

/// As [`fit_discriminator_ratio`] from given initial parameters. Training is
/// full-batch Adam on the class-balanced cross-entropy, so the result is a
/// deterministic function of the inputs.
pub fn fit_discriminator_warm(
    samples_p: &SampleTable,
    samples_q: &SampleTable,
    spec: &DiscriminatorSpec,
    init: Vec<f64>,
) -> Result<RatioModel> {
    if samples_p.is_empty() || samples_q.is_empty() {
        return Err(invalid("samples", "both classes need samples"));
    }
    if samples_p.dim() != samples_q.dim() {
        return Err(Error::DimensionMismatch {
            expected: samples_p.dim(),
            got: samples_q.dim(),
        });
    }
    if spec.steps == 0 {
        return Err(invalid("dre.steps", "must be at least 1"));
    }
    let net = spec.network(samples_p.dim())?;
    if init.len() != net.param_count() {
        return Err(Error::DimensionMismatch {
            expected: net.param_count(),
            got: init.len(),
        });
    }
    let mut params = init;
    let mut opt = Optimizer::new(OptimizerSpec::adam(spec.lr), params.len())?;
    let (np, nq) = (samples_p.len() as f64, samples_q.len() as f64);
    let mut grad = vec![0.0; params.len()];
    let mut out = [0.0];
    for step in 0..spec.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for x in samples_p.rows() {
            net.forward(&params, x, &mut out);
            loss += softplus(-out[0]) / np;
            net.vjp(&params, x, &[-sigmoid(-out[0]) / np], &mut grad, None);
        }
        for x in samples_q.rows() {
            net.forward(&params, x, &mut out);
            loss += softplus(out[0]) / nq;
            net.vjp(&params, x, &[sigmoid(out[0]) / nq], &mut grad, None);
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { step });
        }
        opt.step(&mut params, &grad);
    }
    Ok(RatioModel::Logistic { net, params })
}
