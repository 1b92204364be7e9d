//! The alternating training loop: refresh the ratio fit, then take one
//! optimizer step on the generator parameters.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::{DreKind, FitContext, Objective, Pipeline};
use crate::model::GeneratorFamily;
use crate::optim::{norm, Optimizer, OptimizerSpec};
use crate::rng::derive_seed;

/// Wall clock for step timings. Browsers without a monotonic clock in std
/// record zero.
pub(crate) struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    at: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            at: std::time::Instant::now(),
        }
    }

    pub(crate) fn elapsed_ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.at.elapsed().as_secs_f64() * 1e3;
        #[cfg(target_arch = "wasm32")]
        return 0.0;
    }
}

/// Consecutive small-gradient steps that count as convergence.
pub const PATIENCE: usize = 20;

/// Parameter traces are kept for models up to this size.
pub const MAX_TRACED_PARAMS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub max_steps: usize,
    /// Gradient-norm tolerance for early stopping.
    pub tol: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            max_steps: 5000,
            tol: 1e-3,
        }
    }
}

/// History of one run. Every history has one entry per completed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: usize,
    pub phi: Vec<f64>,
    pub initial_phi: Vec<f64>,
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub wall_ms: Vec<f64>,
    /// Parameters after each step; empty above [`MAX_TRACED_PARAMS`].
    pub trace: Vec<Vec<f64>>,
    pub seed: u64,
    pub converged: bool,
}

impl TrainState {
    fn new(phi: Vec<f64>, seed: u64) -> Self {
        Self {
            step: 0,
            initial_phi: phi.clone(),
            phi,
            losses: Vec::new(),
            grad_norms: Vec::new(),
            wall_ms: Vec::new(),
            trace: Vec::new(),
            seed,
            converged: false,
        }
    }

    /// First step (1-based) after which parameter `coord` lies within
    /// `radius` of `target`.
    pub fn steps_to_within(&self, coord: usize, target: f64, radius: f64) -> Option<usize> {
        self.trace
            .iter()
            .position(|p| (p[coord] - target).abs() < radius)
            .map(|i| i + 1)
    }
}

/// Runs the loop from `init`. Step `t` draws everything from
/// `derive_seed(seed, t)`, so a run is a deterministic function of its inputs.
pub fn train(
    pipeline: &Pipeline,
    init: Vec<f64>,
    optimizer: &OptimizerSpec,
    spec: &TrainSpec,
    seed: u64,
) -> Result<TrainState> {
    pipeline.validate()?;
    pipeline.generator.check_params(&init)?;
    if !(spec.tol >= 0.0) {
        return Err(invalid("train.tol", "must be nonnegative"));
    }
    let mut opt = Optimizer::new(optimizer.clone(), init.len())?;
    let traced = init.len() <= MAX_TRACED_PARAMS;
    let mut state = TrainState::new(init, seed);
    let mut ctx = FitContext::default();
    let mut calm = 0;
    for t in 0..spec.max_steps {
        let started = Stopwatch::start();
        let s = derive_seed(seed, t as u64);
        let refit = t % pipeline.estimator.refit_every == 0;
        ctx = pipeline.prepare_context(&state.phi, s, &ctx, refit)?;
        let r = pipeline.gradient(&state.phi, s, &ctx);
        let r = match r {
            Ok(r) if r.loss.is_finite() => r,
            Ok(_) | Err(Error::NonFinite(_)) => {
                return Err(Error::NonFiniteLoss {
                    step: t,
                    params: state.phi.clone(),
                })
            }
            Err(e) => return Err(e),
        };
        let gn = norm(&r.grad);
        opt.step(&mut state.phi, &r.grad);
        state.step = t + 1;
        state.losses.push(r.loss);
        state.grad_norms.push(gn);
        state.wall_ms.push(started.elapsed_ms());
        if traced {
            state.trace.push(state.phi.clone());
        }
        calm = if gn < spec.tol { calm + 1 } else { 0 };
        if calm >= PATIENCE {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// [`train`] with the objective replaced by the f-divergence, estimated
/// against the model distribution itself.
pub fn train_f_divergence_baseline(
    pipeline: &Pipeline,
    init: Vec<f64>,
    optimizer: &OptimizerSpec,
    spec: &TrainSpec,
    seed: u64,
) -> Result<TrainState> {
    let baseline = Pipeline {
        objective: Objective::FDivergence,
        ..pipeline.clone()
    };
    train(&baseline, init, optimizer, spec, seed)
}

/// [`train`] restricted to the non-adversarial setting: a network generator
/// and closed-form kernel ratios.
pub fn train_nonadversarial_mixture(
    pipeline: &Pipeline,
    init: Vec<f64>,
    optimizer: &OptimizerSpec,
    spec: &TrainSpec,
    seed: u64,
) -> Result<TrainState> {
    if pipeline.dre.kind != DreKind::Mmd {
        return Err(invalid(
            "dre.kind",
            "non-adversarial training needs kernel ratios (mmd)",
        ));
    }
    if !matches!(pipeline.generator.family(), GeneratorFamily::Mlp { .. }) {
        return Err(invalid(
            "generator.family",
            "non-adversarial training expects an mlp generator",
        ));
    }
    train(pipeline, init, optimizer, spec, seed)
}
