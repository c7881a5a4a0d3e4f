//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A series evaluation stopped before reaching the requested tolerance.
    /// Carries the partial sum so callers can decide whether it is usable.
    #[error("series did not converge after {terms} terms (partial sum {partial:e})")]
    Convergence { terms: usize, partial: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    /// The implicit diagonal of the marching solver lost positivity; the
    /// offending node is reported so the grid can be refined there.
    #[error("grid too coarse at t={t:e}, x={x:e}: diagonal coefficient {coeff:e} <= 0")]
    GridTooCoarse { t: f64, x: f64, coeff: f64 },

    #[error("residual {name} = {value:e} exceeds tolerance {tol:e}")]
    ResidualExceeded {
        name: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("value {value:e} at t={t:e}, x={x:e} is below the negativity tolerance")]
    NegativeValue { t: f64, x: f64, value: f64 },

    #[error("tail beyond the space grid contributes {fraction:e} > {tol:e} of the mass at t={t:e}")]
    TailTooHeavy { t: f64, fraction: f64, tol: f64 },

    #[error("model does not expose {0}")]
    MissingCapability(&'static str),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("config: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code for the CLI contract: 0 success, 2 config error,
    /// 3 missing prerequisite, 4 missing inputs, 5 invariant failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::MissingPrerequisite(_) => 3,
            Error::MissingInput(_) | Error::Io(_) | Error::Json(_) => 4,
            _ => 5,
        }
    }
}
