use thiserror::Error;

pub type Result<T, E = DynoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DynoError {
    #[error(transparent)]
    Core(#[from] mutualfriends_core::Error),
    #[error(transparent)]
    Autodiff(#[from] mutualfriends_autodiff::AutodiffError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("no training examples")]
    EmptyCorpus,
    #[error("checkpoint does not match its config: {0}")]
    Mismatch(String),
}

impl DynoError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
