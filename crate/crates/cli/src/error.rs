use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] saeb::Error),

    #[error("{0}")]
    Usage(String),

    #[error("manifest check failed: {0}")]
    Manifest(String),

    #[error("replay differs from the recorded run: {0}")]
    ReplayMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for user and configuration errors, 1 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Engine(saeb::Error::NonFiniteStart { .. } | saeb::Error::Diagnostics(_)) => 1,
            CliError::ReplayMismatch(_) => 1,
            _ => 2,
        }
    }
}
