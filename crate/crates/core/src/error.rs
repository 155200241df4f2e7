use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("window extraction failed: {0}")]
    ExtractionFailure(String),
    #[error("non-finite value in {block}")]
    NumericOverflow { block: String },
    #[error("training diverged at epoch {epoch}")]
    TrainingFailure { epoch: usize },
    #[error("threshold calibration failed: {0}")]
    CalibrationFailure(String),
    #[error("configuration error: {0}")]
    Configuration(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
