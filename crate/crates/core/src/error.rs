use thiserror::Error;

pub type Result<T> = std::result::Result<T, QuasrError>;

#[derive(Debug, Error)]
pub enum QuasrError {
    #[error("value {value} outside the domain [0, 1]")]
    Domain { value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dataset has no samples")]
    EmptyData,

    #[error("dataset support does not match the requested basis: {0}")]
    Support(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column dimension {dim} exceeds the configured cap {cap}")]
    ColumnTooLarge { dim: usize, cap: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("solver did not converge after {iterations} iterations (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("criterion unavailable: {0}")]
    CriterionUnavailable(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
