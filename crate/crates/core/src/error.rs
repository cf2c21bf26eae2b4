use thiserror::Error;

/// Errors raised by the algebra, signature, field and scheme routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Operands disagree on dimension, depth or shape.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A precondition on an argument does not hold.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The inner ODE produced a non-finite state.
    #[error("integration failed at substep {substep}: {reason}")]
    IntegrationFailure { substep: usize, reason: String },

    /// The refinement loop of the reference solver did not settle.
    #[error("reference solver did not converge after {refinements} refinements (last change {last_change:e})")]
    ReferenceFailure { refinements: usize, last_change: f64 },

    /// Malformed external input (CSV or JSON).
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// `true` for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. } | Error::ReferenceFailure { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
