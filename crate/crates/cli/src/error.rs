use thiserror::Error;

/// A failed command, classified by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or flag values. Exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Missing, malformed or inconsistent inputs and I/O failures. Exit code 2.
    #[error("{0}")]
    Data(String),
    /// Training produced non-finite or exploding values. Exit code 3.
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Divergence(_) => 3,
        }
    }
}

impl From<plantnet_core::Error> for CliError {
    fn from(e: plantnet_core::Error) -> Self {
        use plantnet_core::Error as E;
        match e {
            E::InvalidArgument(_) => Self::Usage(e.to_string()),
            E::NonFinite(_) => Self::Divergence(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
