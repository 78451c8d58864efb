//! Experiment runs: TOML configs, multi-seed training, evaluation with
//! checkpoints, metric reports and their verification.

mod compare;
mod config;
mod metrics;
mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::agent::AgentError;
use crate::env::ScenarioError;

pub use compare::{compare, sign_test_p, Comparison, ComparisonRow};
pub use config::{resolve_scenario, AgentKind, ExperimentConfig};
pub use metrics::{
    aggregate, run_metrics, summarize, verify_report, MetricsReport, ReportKind, RunMetrics, Summary, FINAL_WINDOW,
    REPORT_FILE,
};
pub use run::{run_eval, run_train, EvalRequest, EvalNoise, TrainOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{config}, seed {seed}: {source}")]
    Seed { config: String, seed: u64, source: AgentError },
    #[error("checkpoint does not fit the scenario: {0}")]
    IncompatibleCheckpoint(String),
    #[error("reports cannot be compared: {0}")]
    Mismatch(String),
    #[error("report does not match its logs:\n  {}", .0.join("\n  "))]
    Verify(Vec<String>),
}

impl HarnessError {
    /// Process exit status: 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
}
