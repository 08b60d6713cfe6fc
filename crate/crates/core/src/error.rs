use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parameter vector {0:?} outside the declared domain")]
    OutsideDomain(Vec<f64>),

    #[error("energy {energy} not strictly inside the spectrum ({min}, {max})")]
    EnergyOutsideSpectrum { energy: f64, min: f64, max: f64 },

    #[error("operation requires a two-level system, got dimension {0}")]
    NotTwoLevel(usize),

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("protocol `{0}` is sudden and has no time derivative")]
    SuddenProtocol(String),

    #[error("insufficient overlap: {usable} usable bins, need at least {required}")]
    InsufficientOverlap { usable: usize, required: usize },

    #[error("too few samples: {got} < {required}")]
    TooFewSamples { got: usize, required: usize },

    #[error("unsupported ensemble for this operation: {0}")]
    UnsupportedEnsemble(&'static str),

    #[error("eigendecomposition failed to converge")]
    Eigen,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
