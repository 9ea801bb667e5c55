use std::fmt;

use varphys::Error as CoreError;

/// A failure mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; `path` names the offending field.
    Config { path: String, message: String },
    /// Divergence, ellipticity loss, or another numeric failure.
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Numeric(_) => 3,
            Self::Io(_) => 4,
        }
    }

    /// Attributes a core error raised while building objects from the block at `path`.
    pub fn setup(path: &str, e: CoreError) -> Self {
        match e {
            e @ (CoreError::Ellipticity { .. }
            | CoreError::Numeric { .. }
            | CoreError::Divergence { .. }
            | CoreError::NonFiniteGradient { .. }
            | CoreError::SupportViolation(_)) => Self::Numeric(e.to_string()),
            e => Self::config(path, e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config { path, message } if path.is_empty() => write!(f, "config error: {message}"),
            Self::Config { path, message } => write!(f, "config error at `{path}`: {message}"),
            Self::Numeric(m) => write!(f, "numeric failure: {m}"),
            Self::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Checkpoint(m) => Self::Io(m),
            CoreError::Parameter { .. } | CoreError::Dimension { .. } | CoreError::Incompatible(_) | CoreError::Covariance(_) => {
                Self::config("", e.to_string())
            }
            e => Self::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
