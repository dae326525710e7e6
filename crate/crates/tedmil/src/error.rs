//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or parameter dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation was called outside its contract (wrong label, empty
    /// batch, non-scalar loss, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// A file failed to parse (bad magic, truncation, malformed row).
    #[error("format error: {0}")]
    Format(String),

    /// User-supplied configuration or data failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// A NaN/Inf appeared where a finite value was required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: numeric failures are 2, everything
    /// else (validation, format, shape, contract, io) is 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
