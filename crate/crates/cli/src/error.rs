use kecausal::Error as CoreError;
use thiserror::Error;

/// Failures of a run, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl ToString) -> Self {
        Self::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Data(_) | Self::Io(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::IllConditioned { .. } => Self::Numerical(e.to_string()),
            CoreError::Data { .. }
            | CoreError::Malformed(_)
            | CoreError::Io(_)
            | CoreError::SampleTooSmall { .. }
            | CoreError::DegeneratePoints
            | CoreError::EmptyPointSet
            | CoreError::LengthMismatch { .. }
            | CoreError::DimensionMismatch { .. } => Self::Data(e.to_string()),
            CoreError::MissingRole(role) => Self::config("input.role_map", format!("role `{role}` is not mapped")),
            CoreError::InvalidScenario(_) => Self::config("input.scenario", e),
            CoreError::InvalidKernel(_) | CoreError::SpecMismatch(_) | CoreError::UnsupportedFamily { .. } => {
                Self::config("estimator.kernels", e)
            }
            CoreError::InvalidParameter { name, .. } => Self::config(format!("estimator.{name}"), e),
            CoreError::Unsupported(_) | CoreError::UnsupportedAdjustment(_) => Self::config("task", e),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
