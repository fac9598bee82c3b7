//! Batch interface to `msjm-core`: TOML run configurations, CSV cohort files,
//! JSON parameter files and the `simulate`, `fit`, `fim` and `predict`
//! commands.

pub mod commands;
pub mod config;
pub mod io;

use msjm_core::Error;

/// Failure of a command, split by exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad configuration or input data (exit code 2).
    Validation(String),
    /// Everything else (exit code 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Graph(_)
            | Error::UnknownEdge { .. }
            | Error::IllegalTransition { .. }
            | Error::Validation(_)
            | Error::Shape(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
