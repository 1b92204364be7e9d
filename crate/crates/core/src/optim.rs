//! First-order optimizers with gradient clipping and a hard step cap.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// SGD momentum, or Adam's first-moment decay.
    pub momentum: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradient norm clip; every step also moves at most `lr * clip`.
    pub clip: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr: 1e-2,
            momentum: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 10.0,
        }
    }
}

impl OptimizerSpec {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("optimizer.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid(
                "optimizer.momentum",
                "decay rates must lie in [0, 1)",
            ));
        }
        if !(self.clip > 0.0) || !(self.eps > 0.0) {
            return Err(invalid("optimizer.clip", "clip and eps must be positive"));
        }
        Ok(())
    }
}

/// Optimizer state for a fixed parameter count.
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    first: Vec<f64>,
    second: Vec<f64>,
    t: u32,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, n: usize) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            first: vec![0.0; n],
            second: vec![0.0; n],
            t: 0,
        })
    }

    /// Applies one descent step in place and returns the step norm.
    ///
    /// SGD momentum is an exponential average `v = mu v + (1 - mu) g`, so the
    /// step scale is `lr` times a gradient-sized quantity for both kinds.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> f64 {
        let s = &self.spec;
        let gnorm = norm(grad);
        let scale = if gnorm > s.clip { s.clip / gnorm } else { 1.0 };
        self.t += 1;
        let mut delta: Vec<f64> = match s.kind {
            OptimizerKind::Sgd => self
                .first
                .iter_mut()
                .zip(grad)
                .map(|(v, g)| {
                    *v = s.momentum * *v + (1.0 - s.momentum) * g * scale;
                    s.lr * *v
                })
                .collect(),
            OptimizerKind::Adam => {
                let c1 = 1.0 - s.momentum.powi(self.t as i32);
                let c2 = 1.0 - s.beta2.powi(self.t as i32);
                self.first
                    .iter_mut()
                    .zip(self.second.iter_mut())
                    .zip(grad)
                    .map(|((m, v), g)| {
                        let g = g * scale;
                        *m = s.momentum * *m + (1.0 - s.momentum) * g;
                        *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
                        s.lr * (*m / c1) / ((*v / c2).sqrt() + s.eps)
                    })
                    .collect()
            }
        };
        let dn = norm(&delta);
        let cap = s.lr * s.clip;
        if dn > cap {
            delta.iter_mut().for_each(|d| *d *= cap / dn);
        }
        params.iter_mut().zip(&delta).for_each(|(p, d)| *p -= d);
        dn.min(cap)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
