//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Result`]. The variants
//! are coarse on purpose: callers mostly need to distinguish "the input file
//! is bad" from "the math broke down" from "you called this wrong", because
//! those map to different exit codes in the CLI.

use std::fmt;
use std::io;

#[derive(Debug)]
pub enum Error {
    /// A data file could not be parsed. `line` is 1-based for text formats
    /// and a byte offset for the binary format.
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    /// Underlying I/O failure.
    Io(io::Error),
    /// A numerical routine failed or produced a degenerate result that the
    /// caller must resolve (LAPACK non-convergence, zero-trace covariance,
    /// centroid ties, non-finite data, ...).
    Numeric(String),
    /// Arguments violate a documented precondition.
    InvalidArg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse { path, line, msg } => {
                write!(f, "parse error in {path} at {line}: {msg}")
            }
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            Error::InvalidArg(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Numeric(e.to_string())
    }
}
