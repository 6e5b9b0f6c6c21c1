use thiserror::Error;

/// Failures reported by the command-line front end.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent input, or an unwritable output.
    #[error("{0}")]
    Input(String),
    /// The numerical work failed or produced too many failed replications.
    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    /// Process exit status: 2 for input problems, 3 for estimation failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

pub(crate) fn estimation(e: impl std::fmt::Display) -> CliError {
    CliError::Estimation(e.to_string())
}
