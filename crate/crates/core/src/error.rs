use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no scenario with exactly one shared item after {0} attempts")]
    RejectionCapExceeded(usize),
    #[error("empty value set")]
    EmptyValueSet,
    #[error("item {0} is not in the agent's KB")]
    NoSuchItem(usize),
    #[error("unknown agent type `{0}`")]
    UnknownAgent(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("malformed transcript: {0}")]
    Transcript(String),
    #[error("agent failure: {0}")]
    Agent(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}
