use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("value error at row {row}: {message}")]
    Value { row: usize, message: String },

    #[error("subject {subject} has {count} samples, {needed} required")]
    SubjectTooSmall {
        subject: String,
        count: usize,
        needed: usize,
    },

    #[error("degenerate norm: test vector or mean vector is zero")]
    DegenerateNorm,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("empty score set")]
    EmptySet,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
