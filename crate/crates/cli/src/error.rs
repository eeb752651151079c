use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    #[error("{0}")]
    Usage(String),
    /// A computation failed or a checked bound did not hold.
    #[error("{0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Numerical(_) | CliError::Io(_) => ExitCode::from(2),
        }
    }
}

impl From<loopspace::Error> for CliError {
    fn from(e: loopspace::Error) -> Self {
        match e {
            loopspace::Error::Config(_) | loopspace::Error::Json(_) | loopspace::Error::Invalid(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
