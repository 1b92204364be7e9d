use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("measure of kind `{0}` has no density; use a ratio model instead")]
    NoDensity(&'static str),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("ill-posed base measure: zero base density at a node where p or q is {value:.3e}")]
    IllPosedBase { value: f64 },

    #[error("kernel system is singular at ridge {ridge}; use a positive ridge (dre.lambda > 0)")]
    SingularSystem { ridge: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("discriminator training diverged at step {step}")]
    TrainingDiverged { step: usize },

    #[error("non-finite loss at step {step} (parameters {params:?})")]
    NonFiniteLoss { step: usize, params: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
