use std::path::Path;

use mutualfriends_autodiff::AutodiffError;
use mutualfriends_dynonet::DynoError;
use mutualfriends_service::ServiceError;

/// Exit codes: 1 usage, 2 data, 3 internal.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<mutualfriends_core::Error> for CliError {
    fn from(e: mutualfriends_core::Error) -> Self {
        use mutualfriends_core::Error as E;
        match e {
            E::UnknownAgent(_) => CliError::Usage(e.to_string()),
            E::Agent(_) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DynoError> for CliError {
    fn from(e: DynoError) -> Self {
        match e {
            DynoError::Core(c) => c.into(),
            DynoError::Autodiff(e @ AutodiffError::NonScalarLoss(_)) => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
