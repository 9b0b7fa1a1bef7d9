//! CLI-level error type mapping every failure to one of the documented
//! exit codes: 2 for configuration problems, 3 for missing or unreadable
//! data, 4 for numerical breakdowns.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// The configuration (file or flags) is invalid. Exit code 2.
    Config(String),
    /// Input data is missing, unreadable, or malformed. Exit code 3.
    Data(String),
    /// A numerical routine failed or produced a degenerate result that
    /// needs manual review. Exit code 4.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<omar_core::Error> for CliError {
    fn from(e: omar_core::Error) -> Self {
        match e {
            omar_core::Error::Parse { .. } | omar_core::Error::Io(_) => {
                CliError::Data(e.to_string())
            }
            omar_core::Error::Numeric(_) => CliError::Numeric(e.to_string()),
            omar_core::Error::InvalidArg(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("i/o error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
