//! Experiment configuration: JSON in, fully resolved structs out.
//!
//! Unknown keys are rejected at every level and errors carry the JSON path
//! of the offending value.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::convex::ConvexGenerator;
use crate::error::{Error, Result};
use crate::estimator::{BaseSpec, DreSpec, EstimatorSpec, Objective};
use crate::measures::{convolve_gaussian, Measure};
use crate::model::{GeneratorFamily, GeneratorModel};
use crate::optim::OptimizerSpec;
use crate::sample_table::SampleTable;
use crate::trainer::TrainSpec;

/// Covariance: a scalar variance times the identity, or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovSpec {
    Variance(f64),
    Matrix(Vec<Vec<f64>>),
}

impl CovSpec {
    pub fn matrix(&self, dim: usize) -> Result<DMatrix<f64>> {
        match self {
            CovSpec::Variance(v) => Ok(DMatrix::identity(dim, dim) * *v),
            CovSpec::Matrix(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: rows.len(),
                    });
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: CovSpec,
    },
    #[serde(alias = "uniform")]
    UniformBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<MeasureSpec>,
    },
    Convolved {
        base: Box<MeasureSpec>,
        cov: CovSpec,
    },
    /// Samples from a CSV file with a header row.
    Empirical {
        path: String,
    },
}

impl MeasureSpec {
    pub fn build(&self) -> Result<Measure> {
        match self {
            MeasureSpec::Gaussian { mean, cov } => {
                Measure::gaussian(mean.clone(), cov.matrix(mean.len())?)
            }
            MeasureSpec::UniformBox { lo, hi } => Measure::uniform(lo.clone(), hi.clone()),
            MeasureSpec::Mixture {
                weights,
                components,
            } => Measure::mixture(
                weights.clone(),
                components
                    .iter()
                    .map(|c| c.build())
                    .collect::<Result<_>>()?,
            ),
            MeasureSpec::Convolved { base, cov } => {
                let b = base.build()?;
                let c = cov.matrix(b.dim())?;
                convolve_gaussian(&b, c)
            }
            MeasureSpec::Empirical { path } => Measure::empirical(SampleTable::read_csv(path)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseName {
    P,
    Q,
    /// Flat unit density on the grid box.
    Lebesgue,
    /// The noisy mixture configured under `base`.
    NoisyBase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseChoice {
    Named(BaseName),
    Measure(MeasureSpec),
}

impl Default for BaseChoice {
    fn default() -> Self {
        BaseChoice::Named(BaseName::NoisyBase)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceSection {
    pub p: MeasureSpec,
    pub q: MeasureSpec,
    #[serde(default)]
    pub m: BaseChoice,
    /// Quadrature nodes per axis; the default depends on the dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DreFitSection {
    pub num: MeasureSpec,
    pub den: MeasureSpec,
    #[serde(default = "default_fit_n")]
    pub n_num: usize,
    #[serde(default = "default_fit_n")]
    pub n_den: usize,
    /// Held-out denominator draws the fitted ratio is scored on.
    #[serde(default = "default_eval_n")]
    pub n_eval: usize,
}

fn default_fit_n() -> usize {
    4000
}

fn default_eval_n() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub p: MeasureSpec,
    pub q: MeasureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prop1Section {
    pub pairs: Vec<PairSpec>,
    /// Noise variances; every pair is checked at every value.
    pub sigma2: Vec<f64>,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
}

fn default_n_mc() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSignalSection {
    pub thetas: Vec<f64>,
    /// Generator of the f-divergence column.
    #[serde(default = "default_js")]
    pub f_divergence: String,
    #[serde(default = "default_signal_points")]
    pub points: usize,
    #[serde(default = "default_signal_step")]
    pub fd_step: f64,
}

fn default_js() -> String {
    "js".into()
}

fn default_signal_points() -> usize {
    4096
}

fn default_signal_step() -> f64 {
    1e-3
}

fn default_f() -> String {
    "neglog".into()
}

fn default_eval_samples() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Convex generator: tlogt, neglog, square or js.
    #[serde(default = "default_f")]
    pub f: String,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<MeasureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorFamily>,
    /// Initial generator parameters; the family default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub base: BaseSpec,
    #[serde(default)]
    pub dre: DreSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub train: TrainSpec,
    /// Samples per side for the final two-sample metrics.
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<DivergenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dre_fit: Option<DreFitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prop1: Option<Prop1Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_signal: Option<SupportSignalSection>,
}

fn default_objective() -> Objective {
    Objective::ScaledBregman
}

fn config_error(path: impl Into<String>, reason: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.into(),
        reason: reason.to_string(),
    }
}

/// Re-labels a validation failure with the config path it came from.
fn at<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidParameter { name, reason } => config_error(name, reason),
        other => config_error(path, other),
    })
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(path, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    /// Canonical JSON of the resolved config, defaults filled in.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn output_dir(&self) -> String {
        self.output_dir
            .clone()
            .unwrap_or_else(|| format!("runs/{}", self.experiment))
    }

    pub fn generator_f(&self) -> Result<ConvexGenerator> {
        at("f", ConvexGenerator::from_name(&self.f))
    }

    pub fn data_measure(&self) -> Result<Measure> {
        let spec = self
            .data
            .as_ref()
            .ok_or_else(|| config_error("data", "this command needs a data measure"))?;
        at("data", spec.build())
    }

    pub fn generator_model(&self) -> Result<GeneratorModel> {
        let fam = self
            .generator
            .clone()
            .ok_or_else(|| config_error("generator", "this command needs a generator"))?;
        at("generator", GeneratorModel::new(fam))
    }

    /// Initial parameters: `init` when given, otherwise the family default
    /// drawn from stream `(seed, 99)`.
    pub fn initial_params(&self, g: &GeneratorModel) -> Result<Vec<f64>> {
        let init = match &self.init {
            Some(p) => p.clone(),
            None => g.init_params(&mut crate::rng::stream(self.seed, 99)),
        };
        at("init", g.check_params(&init).map(|_| init))
    }

    /// Checks everything that does not need file access.
    pub fn validate(&self) -> Result<()> {
        if self.experiment.trim().is_empty() {
            return Err(config_error("experiment", "must be a nonempty name"));
        }
        self.generator_f()?;
        at("base", self.base.validate())?;
        at("dre", self.dre.kernel().validate())?;
        at("optimizer", self.optimizer.validate())?;
        if self.estimator.n_base == 0 || self.estimator.n_fit < 2 {
            return Err(config_error(
                "estimator.n_base",
                "need n_base >= 1 and n_fit >= 2",
            ));
        }
        if !(self.estimator.fd_step > 0.0) {
            return Err(config_error(
                "estimator.fd_step",
                "finite-difference step must be positive",
            ));
        }
        if self.estimator.refit_every == 0 {
            return Err(config_error("estimator.refit_every", "must be at least 1"));
        }
        if !(self.train.tol >= 0.0) {
            return Err(config_error("train.tol", "must be nonnegative"));
        }
        if self.eval_samples < 2 {
            return Err(config_error("eval_samples", "need at least 2"));
        }
        if let Some(g) = &self.generator {
            let model = at("generator", GeneratorModel::new(g.clone()))?;
            if let Some(init) = &self.init {
                at("init", model.check_params(init))?;
            }
        }
        if let Some(p) = &self.prop1 {
            if p.pairs.is_empty() || p.sigma2.is_empty() {
                return Err(config_error(
                    "prop1",
                    "need at least one pair and one sigma2",
                ));
            }
            if p.sigma2.iter().any(|s| !(*s > 0.0)) {
                return Err(config_error(
                    "prop1.sigma2",
                    "noise variances must be positive",
                ));
            }
        }
        if let Some(s) = &self.support_signal {
            at(
                "support_signal.f_divergence",
                ConvexGenerator::from_name(&s.f_divergence),
            )?;
            if s.thetas.is_empty() {
                return Err(config_error(
                    "support_signal.thetas",
                    "need at least one theta",
                ));
            }
            if s.points < 64 {
                return Err(config_error(
                    "support_signal.points",
                    "need at least 64 nodes",
                ));
            }
        }
        Ok(())
    }
}
