use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FptError {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid model or control parameters.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The strip geometry violates the ordering or configuration requirements.
    #[error("invalid strip: {0}")]
    InvalidStrip(String),

    /// A kernel or transform evaluation returned a non-finite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The Euler recursion produced a negative value beyond the clamp tolerance.
    #[error("step size too large: {0}")]
    StepSize(String),

    /// A near-singular denominator in a Laplace-domain formula.
    #[error("ill-conditioned: {0}")]
    Conditioning(String),

    /// Grids of different step or origin were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The requested reference or route is not available for this problem.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Too few uncensored Monte Carlo samples for a comparison.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("io: {0}")]
    Io(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, FptError>;

impl From<std::io::Error> for FptError {
    fn from(e: std::io::Error) -> Self {
        FptError::Io(e.to_string())
    }
}

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(FptError::NonFinite(format!("{what} evaluated to {value}")))
    }
}
