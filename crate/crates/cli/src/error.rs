use std::path::PathBuf;

use packorder_core::dataset::DatasetError;
use packorder_core::metrics::MetricsError;
use packorder_core::pipeline::{LexiconError, PipelineError};
use packorder_core::planner::PlannerError;
use packorder_core::preference::PreferenceError;
use packorder_core::provider::ProviderError;
use packorder_core::scoring::ScoringError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] PreferenceError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("replayed report differs from {0}")]
    ReplayMismatch(PathBuf),
}

pub const EXIT_CODES: &str = "\
Exit codes:
  0   success
  2   usage or config error
  3   file could not be read or written (io)
  4   scene, survey or alias file rejected (dataset)
  5   preference model could not be built or loaded (model)
  6   sequence could not be scored (scoring)
  7   planner rejected the request (planner)
  8   prompt, lexicon, parsing or validation failure (pipeline)
  9   chat provider failure (provider)
  10  metrics could not be computed or a replay differs (metrics)

Errors are printed to stderr as `error[<category>]: <message>`.";

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } | CliError::Dataset(DatasetError::Io { .. }) => "io",
            CliError::Dataset(_) => "dataset",
            CliError::Model(_) => "model",
            CliError::Scoring(_) => "scoring",
            CliError::Planner(_) => "planner",
            CliError::Pipeline(PipelineError::Provider { .. }) | CliError::Provider(_) => "provider",
            CliError::Pipeline(_) | CliError::Lexicon(_) => "pipeline",
            CliError::Metrics(_) | CliError::ReplayMismatch(_) => "metrics",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" | "config" => 2,
            "io" => 3,
            "dataset" => 4,
            "model" => 5,
            "scoring" => 6,
            "planner" => 7,
            "pipeline" => 8,
            "provider" => 9,
            _ => 10,
        }
    }
}
