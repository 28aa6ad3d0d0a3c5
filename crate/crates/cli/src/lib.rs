//! Experiment driver: loads a TOML config, runs the SDAE and SDAE-IVS
//! pipelines and writes reports, models and images.

use std::fmt;

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod report;

pub use commands::{cmd_eval, cmd_export_patterns, cmd_ivs, cmd_reconstruct, cmd_run, load_data, Splits};
pub use config::ExperimentConfig;
pub use report::RunReport;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub(crate) fn data(e: impl fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub(crate) fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
