use thiserror::Error;

/// Errors produced by the map, trainer, metrics and I/O layers.
#[derive(Debug, Error)]
pub enum FcmError {
    /// Matrix/vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter or argument is outside its contract.
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    /// Malformed input data or model file content.
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Non-finite values or diverged training.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, FcmError>;
