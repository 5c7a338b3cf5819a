use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time grid is not strictly increasing at index {index}")]
    NonIncreasingGrid { index: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("quadrature did not converge: {0}")]
    Convergence(String),

    #[error("curve is identically zero (infinitely smooth payoff)")]
    InfiniteSmoothness,

    #[error("all errors are zero (exact hedge)")]
    ExactHedge,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("output error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence(_) | Error::NonFinite(_) | Error::InfiniteSmoothness | Error::ExactHedge
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {value}")))
    }
}
