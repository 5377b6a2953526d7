use thiserror::Error;

/// Failures of a command, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or config; exit status 1.
    #[error("{0}")]
    Usage(String),
    /// Anything that went wrong while running; exit status 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }

    /// Wraps a runtime failure with what was being attempted.
    pub fn runtime(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{context}: {err}"))
    }
}
