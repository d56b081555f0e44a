//! CLI error classes and their exit codes.

use std::fmt;

/// Anything that should stop the harness.  Physics failures are not errors;
/// they travel through `Regime` and still exit 0.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.  The message names the
    /// offending key where one exists.
    Config(String),
    /// Filesystem trouble; exit code 3.
    Io(String),
    /// A scenario could not meet its own postcondition (no steady cycle for
    /// a flow-field capture, a failed validation check); exit code 1.
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> CliError {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
            CliError::Run(msg) => write!(f, "run error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Core errors surface as configuration problems: every runtime physics
/// failure is already folded into the regime before it can reach here.
impl From<magswim_core::Error> for CliError {
    fn from(err: magswim_core::Error) -> CliError {
        CliError::Config(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
