//! Experiment orchestration: configuration, seeded training runs,
//! multi-seed aggregation and greedy evaluation.

mod config;
mod metrics;
mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::agent::AgentError;
use crate::case::CaseError;

pub use config::{split_seed, RunConfig, SeedStream};
pub use metrics::{
    aggregate, read_metrics, write_aggregate, write_metrics, AggregateSeries, EpisodeMetrics,
    METRIC_COLUMNS,
};
pub use run::{
    aggregate_runs, build_agent, evaluate_policy, load_agent, load_case_file, random_policy_mean,
    run_multi_seed, run_training, EvaluationReport, RunOutput,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot load case {path}: {reason}")]
    CaseLoad { path: PathBuf, reason: String },
    #[error("case {path} is invalid: {source}")]
    CaseParse {
        path: PathBuf,
        #[source]
        source: CaseError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Agent(AgentError),
    #[error("run with seed {seed} failed: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<HarnessError>,
    },
}

impl From<AgentError> for HarnessError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::CheckpointMismatch(m) => HarnessError::CheckpointMismatch(m),
            AgentError::InvalidConfig(m) => HarnessError::Config(m),
            other => HarnessError::Agent(other),
        }
    }
}

impl HarnessError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::CaseLoad { .. } | HarnessError::CaseParse { .. } => 3,
            HarnessError::Io { .. } | HarnessError::Csv { .. } => 4,
            HarnessError::CheckpointMismatch(_) => 5,
            HarnessError::Agent(_) => 1,
            HarnessError::Run { source, .. } => source.exit_code(),
        }
    }
}
