use thiserror::Error;

/// Errors raised by the discretization, solver and verification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("degenerate case: {0}")]
    Degenerate(String),
    #[error("count overflow: {0}")]
    Overflow(String),
    #[error("enumeration refused: {0}")]
    TooLarge(String),
    #[error("numeric divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
