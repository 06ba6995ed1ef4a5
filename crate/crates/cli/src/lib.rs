//! Experiment CLI for the `sdi-core` Gaussian approximate-inference
//! library: configuration handling, deterministic CSV/JSON exports, and
//! the desk-scale experiment commands (`run`, `compare`, `sweep-alpha`,
//! `folk-theorem`, `verify`).

pub mod commands;
pub mod config;
pub mod model;
pub mod output;

use std::fmt;

/// CLI-level error with the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Configuration / usage problems (exit 1).
    Config(String),
    /// Library errors during a run (exit 1).
    Run(sdi_core::Error),
    /// IO failures (exit 1).
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Run(e) => write!(f, "run error: {e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sdi_core::Error> for CliError {
    fn from(e: sdi_core::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Exit-code contract: 0 converged/pass, 1 usage or config error,
/// 2 non-convergence, 3 verification failure.
pub mod exit_code {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const NOT_CONVERGED: u8 = 2;
    pub const VERIFY_FAILED: u8 = 3;
}
