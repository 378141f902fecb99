//! Crate-wide error type.

use std::fmt;

/// Errors raised by the workbench.
#[derive(Debug)]
pub enum Error {
    /// Input outside the mathematical domain of an operation (e.g. NaN).
    Domain(String),
    /// Invalid argument value (unsupported segment count, bad QAM order, ...).
    Argument(String),
    /// Tensor/sequence shape mismatch.
    Dimension(String),
    /// API misuse (e.g. stale cache handed to a backward pass).
    Usage(String),
    /// Training aborted (non-finite loss/gradient, dead-gradient collapse).
    Training(String),
    /// Malformed text record or file content.
    Parse(String),
    /// Underlying I/O failure, with path context where available.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Argument(m) => write!(f, "argument error: {m}"),
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Usage(m) => write!(f, "usage error: {m}"),
            Error::Training(m) => write!(f, "training error: {m}"),
            Error::Parse(m) => write!(f, "parse error: {m}"),
            Error::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io_path(e: std::io::Error, path: &std::path::Path) -> Self {
        Error::Io(format!("{}: {e}", path.display()))
    }
}
