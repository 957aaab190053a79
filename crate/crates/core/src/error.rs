//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error enum. The CLI maps variants onto exit-code classes:
/// configuration (2), data (3) and numeric failure (4).
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up (channel mismatch, bad rank, ...).
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation argument is out of its valid range.
    #[error("parameter error: {0}")]
    Param(String),

    /// A model or run configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// Input data violates a precondition (empty dataset, bad label, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A text input could not be parsed; `at` names the spot (line number,
    /// filename, field).
    #[error("parse error at {at}: {msg}")]
    Parse { at: String, msg: String },

    /// Two inputs that must describe the same run do not match.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// A computation produced NaN/Inf or otherwise diverged.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Error {
        Error::Data(format!("csv: {e}"))
    }
}

impl Error {
    /// Exit code class used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Param(_) | Error::Shape(_) => 2,
            Error::Data(_) | Error::Parse { .. } | Error::Consistency(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }

    pub fn parse(at: impl Into<String>, msg: impl Into<String>) -> Error {
        Error::Parse { at: at.into(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
