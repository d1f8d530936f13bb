use std::io;

use thiserror::Error;

/// Errors raised by the place-recognition library.
#[derive(Debug, Error)]
pub enum EprError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// Header or token that does not follow the file format.
    #[error("format error: {0}")]
    Format(String),

    /// Payload shorter or longer than the header announces.
    #[error("truncated payload: header announces {expected} values, file holds {actual}")]
    Truncated { expected: usize, actual: usize },

    /// Data violating a type invariant (non-finite value, zero norm, empty set).
    #[error("validation error: {0}")]
    Validation(String),

    /// Index outside the range of its descriptor set.
    #[error("range error: {0}")]
    Range(String),

    /// Argument outside the domain of a numeric operation.
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, EprError>;
