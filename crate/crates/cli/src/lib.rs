//! Experiment runner: configuration, persisted records, reports, the η sweep
//! and the published-table ρ check.

use std::path::{Path, PathBuf};

pub mod audit;
pub mod config;
pub mod experiment;
pub mod golden;
pub mod record;
pub mod report;
pub mod sweep;

pub use config::ExperimentConfig;
pub use experiment::run_experiment;
pub use record::ExperimentRecord;

/// Environment variable naming the directory that holds run directories.
pub const RUNS_DIR_ENV: &str = "WAT_RUNS_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// `root/name`, where `root` is the explicit override, the environment variable or `./runs`.
pub fn run_dir(root: Option<PathBuf>, name: &str) -> PathBuf {
    root.or_else(|| std::env::var_os(RUNS_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
        .join(name)
}
