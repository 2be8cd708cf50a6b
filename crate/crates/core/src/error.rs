//! Crate-wide error type.

use thiserror::Error;

/// Errors shared across the simulation and analysis modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A standing hypothesis on the rate environment is violated.
    #[error("hypothesis {name} does not hold: {detail}")]
    Hypothesis { name: &'static str, detail: String },

    /// Queue index outside the range on which the environment is defined.
    #[error("rate index {index} out of range (environment defined up to {max})")]
    IndexOutOfRange { index: u32, max: u32 },

    /// The simulation frontier reached its configured hard cap.
    #[error("frontier cap {cap} reached at time {time}; aborting run")]
    FrontierCap { cap: u32, time: f64 },

    /// Activity in a graphical-construction run reached the field cap.
    #[error("coupled run reached queue cap {cap} at time {time}")]
    CapReached { cap: u32, time: f64 },

    /// Truncation cap leaks too much probability mass.
    #[error("truncation cap too small: boundary mass {mass:.3e} exceeds {threshold:.3e}")]
    CapTooSmall { mass: f64, threshold: f64 },

    /// Not enough observations for the requested estimator.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Invalid configuration or arguments.
    #[error("invalid input: {0}")]
    BadInput(String),
}

impl Error {
    pub(crate) fn hypothesis(name: &'static str, detail: impl Into<String>) -> Self {
        Error::Hypothesis {
            name,
            detail: detail.into(),
        }
    }

    pub(crate) fn bad_input(detail: impl Into<String>) -> Self {
        Error::BadInput(detail.into())
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
