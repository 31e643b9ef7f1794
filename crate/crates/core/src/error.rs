use alloc::string::String;

/// Errors raised by the forecasting core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("time grid mismatch: {0}")]
    GridMismatch(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("insufficient overlap: {0}")]
    InsufficientOverlap(String),
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error("missing input at {timestamp}, column {column}")]
    MissingInput { timestamp: String, column: String },
    #[error("horizon {0} is not fitted")]
    UnfittedHorizon(usize),
    #[error("train/test leakage: {0}")]
    Leakage(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
