use thiserror::Error;

/// Failures, split by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration (exit code 1).
    #[error("{0}")]
    Usage(String),
    /// A solver or simulator failure (exit code 2).
    #[error(transparent)]
    Model(#[from] aoisched_core::Error),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Model(e) if is_config_error(e) => 1,
            _ => 2,
        }
    }
}

fn is_config_error(e: &aoisched_core::Error) -> bool {
    use aoisched_core::Error::*;
    matches!(e, Domain(_) | InvalidService(_) | InvalidMenu(_) | InvalidState(_) | Config(_))
}

pub type CliResult<T> = Result<T, CliError>;
