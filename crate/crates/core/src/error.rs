use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {x} lies outside the domain [{a}, {b}]")]
    Domain { x: f64, a: f64, b: f64 },

    #[error("unsupported representation: {0}")]
    UnsupportedRepresentation(String),

    #[error("incompatible discretizations: {0}")]
    Incompatible(String),

    #[error("ellipticity violated: coefficient {value} at x = {x} is not positive")]
    Ellipticity { x: f64, value: f64 },

    #[error("covariance is not symmetric positive-definite: {0}")]
    Covariance(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("support violation: log-ratio is not finite ({0})")]
    SupportViolation(String),

    #[error("non-finite value in {context}{}", layer.map(|l| format!(" at layer {l}")).unwrap_or_default())]
    Numeric {
        context: &'static str,
        layer: Option<usize>,
    },

    #[error("mini-batch is empty")]
    EmptyBatch,

    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },

    #[error("training diverged at step {step}: objective {value} exceeds guard {limit}")]
    Divergence { step: usize, value: f64, limit: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            found,
        })
    }
}
