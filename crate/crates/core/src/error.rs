use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("too few levels: need at least {needed}, got {got}")]
    TooFewLevels { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("under-determined fit: {0}")]
    UnderDetermined(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
