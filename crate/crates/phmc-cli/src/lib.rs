//! Experiment runner around the `phmc` library: configuration loading,
//! command execution, manifests and plot-data emission.

pub mod config;
pub mod runner;
pub mod svg;

use std::fmt;

/// CLI-level errors, classified for the exit code contract:
/// 0 ok, 1 validation failure, 2 config error, 3 numerical divergence.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Validation(String),
    Lib(phmc::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
            CliError::Validation(msg) => write!(f, "validation failure: {msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<phmc::Error> for CliError {
    fn from(e: phmc::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(phmc::Error::Divergence { .. }) => 3,
            _ => 1,
        }
    }
}
