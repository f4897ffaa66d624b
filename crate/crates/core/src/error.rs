use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("penalty parameter must be positive, got {0}")]
    NonPositivePenalty(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("analytic gradient requires second-order oracles that this problem does not provide")]
    MissingSecondOrder,

    #[error("point is not in the zero-mean subspace (residual {residual:e} > {tol:e})")]
    NotZeroMean { residual: f64, tol: f64 },

    #[error("system is not exactly controllable: smallest Gramian eigenvalue {lambda_min:e}")]
    Uncontrollable { lambda_min: f64 },

    #[error("iteration budget exhausted after {iterations} iterations (best bound {best:e})")]
    IterationBudget { iterations: usize, best: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("linear system is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;
