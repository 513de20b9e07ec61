use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum GemError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for vocabulary of size {size}")]
    OutOfRange { index: usize, size: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GemError>;

pub(crate) fn check_index(index: usize, size: usize) -> Result<()> {
    if index >= size {
        Err(GemError::OutOfRange { index, size })
    } else {
        Ok(())
    }
}
