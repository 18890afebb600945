use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("variance must be positive and finite (index {index}, value {value})")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("block {block} covariance is not positive definite")]
    NotPositiveDefinite { block: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid-scale violation: lambda {lambda} must be strictly below c = {c}")]
    GridScale { lambda: f64, c: f64 },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("loss `{0}` is not differentiable")]
    NotDifferentiable(&'static str),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("degenerate coordinate {index}: {reason}")]
    DegenerateCoordinate { index: usize, reason: &'static str },

    #[error("bad magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("missing test split")]
    MissingTestSplit,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("metadata error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
