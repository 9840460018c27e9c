use std::io;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Bad magic, unsupported version or unparseable header.
    #[error("format error: {0}")]
    Format(String),

    /// Truncated payload or an offset pointing outside the file.
    #[error("corrupt file: {0}")]
    Corruption(String),

    /// Decoded content violates a type invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
