//! Scaled Bregman divergences between probability measures, noisy base
//! measures, density-ratio estimation and gradient-based training of
//! implicit generative models.

// `!(x > 0.0)` is the idiom used to reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base_measure;
pub mod config;
pub mod convex;
pub mod divergence;
pub mod dre;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod measures;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod run;
pub mod sample_table;
pub mod stats;
pub mod trainer;

pub use base_measure::{build_noisy_base, symmetric_base, NoisyBase};
pub use config::{ExperimentConfig, MeasureSpec};
pub use convex::{ConvexGenerator, CustomGenerator};
pub use divergence::{f_divergence, scaled_bregman, separable_bregman, BaseDensity};
pub use dre::{fit_discriminator_ratio, fit_mmd_ratio, KernelSpec, RatioModel};
pub use error::{Error, Result};
pub use estimator::{
    estimate, BaseSpec, BregmanEstimate, DreKind, DreSpec, EstimatorSpec, FitContext, GradientMode,
    Objective, Pipeline,
};
pub use geometry::{entropy_gaussian, verify_prop1, w2_empirical_1d, w2_gaussian, Prop1Report};
pub use measures::{Measure, QuadratureGrid};
pub use model::{GeneratorFamily, GeneratorModel};
pub use run::RunRecord;
pub use sample_table::SampleTable;
pub use trainer::{
    train, train_f_divergence_baseline, train_nonadversarial_mixture, TrainSpec, TrainState,
};
