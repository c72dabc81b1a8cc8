//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the forecasting library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands (or an operand and a configuration) disagree on shape.
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    /// A configuration value violates its documented bounds.
    #[error("invalid config: {0}")]
    Config(String),

    /// A dataset or file failed validation.
    #[error("data error: {0}")]
    Data(String),

    /// A CSV cell or row could not be parsed. Line numbers are 1-based and
    /// include the header.
    #[error("{path}: line {line}: {msg}")]
    Csv {
        path: String,
        line: usize,
        msg: String,
    },

    /// A numeric quantity became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        left: impl std::fmt::Display,
        right: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
