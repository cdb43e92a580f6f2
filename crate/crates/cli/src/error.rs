use kite_core::Error as CoreError;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("under-determined fit: {0}")]
    UnderDetermined(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) | Self::Output(_) => 3,
            Self::UnderDetermined(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::UnderDetermined(m) => Self::UnderDetermined(m),
            CoreError::NumericalFailure(_) | CoreError::ResourceLimit(_) | CoreError::TooFewLevels { .. } => {
                Self::Numerical(e.to_string())
            }
            CoreError::InvalidDimension(_)
            | CoreError::InvalidParams(_)
            | CoreError::OutOfRange(_)
            | CoreError::DimensionMismatch { .. }
            | CoreError::ShapeMismatch(_) => Self::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
