//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MklError {
    /// An argument was outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Shapes or sample sizes disagree between related objects.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Input data violates a structural invariant (asymmetry, indefiniteness, …).
    #[error("data error: {0}")]
    Data(String),

    /// A numerical routine failed to reach its documented tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed configuration file or field.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MklError>;
