//! Benchmark harness for the sketched Newton-Raphson solvers: experiment
//! configuration, parallel runs with per-run metrics files, and grid search
//! over the TCS coin probability and stepsize.

pub mod config;
pub mod experiment;
pub mod grid;
pub mod methods;
pub mod metrics;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, ExperimentSummary};
pub use grid::{grid_search, GridSummary};
pub use methods::MethodSpec;
pub use metrics::{MetricsRow, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] snr_core::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {reason}")]
    Schema { path: PathBuf, reason: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::File {
            path: path.to_path_buf(),
            source,
        }
    }
}
