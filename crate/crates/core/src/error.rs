use thiserror::Error;

/// Errors raised by the model, samplers and pricing routes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A specification violates one of its invariants. `invariant` is a stable
    /// short name suitable for reporting.
    #[error("invalid specification ({invariant}): {detail}")]
    InvalidSpec {
        invariant: &'static str,
        detail: String,
    },

    /// An argument lies outside the region where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure did not reach its tolerance.
    #[error("numeric failure in {routine}: {detail}")]
    Numeric {
        routine: &'static str,
        detail: String,
    },

    #[error("singular matrix at t = {time}")]
    Singular { time: f64 },

    /// A user-supplied process rule failed to evaluate.
    #[error("drift evaluation failed at t = {time}: {reason}")]
    Adapter { time: f64, reason: String },
}

impl Error {
    pub(crate) fn spec(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidSpec {
            invariant,
            detail: detail.into(),
        }
    }

    pub(crate) fn numeric(routine: &'static str, detail: impl Into<String>) -> Self {
        Error::Numeric {
            routine,
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidSpec { .. } | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
