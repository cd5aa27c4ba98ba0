use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] binklf_core::Error),
    #[error("unknown scenario `{0}` (try `binklf scenarios`)")]
    UnknownScenario(String),
    #[error("unknown filter `{0}`")]
    UnknownFilter(String),
    #[error("{0}")]
    Config(String),
    #[error("{count} of {runs} Monte Carlo runs failed, first failure: {first}")]
    TooManyFailures {
        count: usize,
        runs: usize,
        first: String,
    },
    #[error("trajectory of run {run} changed while filter `{filter}` consumed it")]
    TrajectoryMutated { run: usize, filter: &'static str },
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("config {path}: {source}")]
    ConfigFile {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Usage errors exit with 2, numerical failures with 3, anything else 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::UnknownScenario(_)
            | HarnessError::UnknownFilter(_)
            | HarnessError::Config(_) => 2,
            HarnessError::ConfigFile { .. } => 2,
            HarnessError::Core(e) if e.is_numerical() => 3,
            HarnessError::Core(_) => 2,
            HarnessError::TooManyFailures { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
