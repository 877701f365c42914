//! Experiment orchestration: configuration, the closed-loop run, telemetry
//! and metrics output, and the named experiment suite.

use std::path::Path;

use thiserror::Error;

pub mod config;
pub mod metrics;
pub mod properties;
pub mod sim;
pub mod suite;
pub mod telemetry;

pub use config::{ExperimentKind, RunConfig, TrajectoryKind, TrajectoryParams};
pub use metrics::{compute_metrics, write_metrics, RunMetrics};
pub use sim::run;
pub use suite::{experiment_suite, CriterionResult};
pub use telemetry::{write_csv, TelemetryLog, TelemetryRecord, CSV_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("simulation diverged at t = {t} s: {reason}")]
    BlowUp { t: f64, reason: String },
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::IoFailure {
            path: path.display().to_string(),
            source,
        }
    }
}
