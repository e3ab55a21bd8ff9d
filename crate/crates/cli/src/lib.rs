//! Driver for OPF runs: configuration, the run pipeline, reports and the
//! `hiopf` subcommands.

pub mod config;
pub mod pipeline;
pub mod report;

use thiserror::Error;

/// Any failure of a run, tagged with the stage that produced it.
#[derive(Debug, Error)]
#[error("[{module}] {message}")]
pub struct CliError {
    pub module: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(module: &'static str, message: impl Into<String>) -> Self {
        Self {
            module,
            message: message.into(),
        }
    }
}
