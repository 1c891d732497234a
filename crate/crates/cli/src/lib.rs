//! Scenario runner: parses a JSON scenario, runs the identification pipeline
//! and writes CSV and JSON reports.

pub mod config;
pub mod report;
pub mod runner;

use std::path::PathBuf;

pub use config::ScenarioConfig;
pub use runner::{execute, run, Overrides, RunReport, RunStatus};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}
