//! Configuration, bundled scenarios, experiment runs and report files.

pub mod catalog;
mod compare;
mod config;
mod run;

pub use compare::{compare, compare_files, pct_diff, Comparison, GroupSummary, PairwiseDiff};
pub use config::{load_config, load_scenario_ref, ConfigFile, ScenarioConfig, ScenarioData};
pub use run::{
    evaluate_checkpoint, metrics_header, replay_manifest, run_experiment, write_metrics, Manifest, RunReport, RunStatus,
    FINAL_WINDOW,
};

use crate::env::EnvError;
use crate::network::NetworkError;
use crate::trpo::TrpoError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Trpo(#[from] TrpoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("reports cover different scenarios: {0}")]
    MismatchedScenarios(String),
    #[error("{0}")]
    Usage(String),
}

impl HarnessError {
    /// Wraps a fleet validation message, whose first word names the field.
    pub(crate) fn from_fleet_reason(reason: String) -> Self {
        let field = reason.split([' ', ':']).next().unwrap_or("fleet").to_string();
        HarnessError::Validation { field: format!("fleet.{}", field.trim_end_matches(':')), reason }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}
