use thiserror::Error;

/// Failure of a command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input, bad arguments (exit code 2).
    #[error("{0}")]
    Input(String),

    /// Valid input on which the computation is undefined (exit code 1).
    #[error(transparent)]
    Domain(#[from] carotid_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn input(msg: impl std::fmt::Display) -> CliError {
    CliError::Input(msg.to_string())
}
