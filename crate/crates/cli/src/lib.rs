//! Command implementations behind the `sjl` binary.

pub mod commands;
pub mod config;
pub mod matrix_file;
pub mod vector_spec;

use std::fmt;

use sjl_core::SjlError;

/// Process exit code for runtime failures (I/O, enumeration budget).
pub const EXIT_RUNTIME: i32 = 1;
/// Process exit code for invalid configuration.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}

impl From<SjlError> for CliError {
    fn from(e: SjlError) -> Self {
        match e {
            SjlError::BudgetExceeded { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
