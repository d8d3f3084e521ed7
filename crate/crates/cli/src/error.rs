use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config values or missing inputs; the message says what to change.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lab(#[from] bgvlab::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
