//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh step size {0}: must be 2^-k with k >= 2")]
    InvalidStepSize(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix is singular (pivot {pivot})")]
    Singular { pivot: usize },

    #[error("linear solve reached relative residual {residual:.3e}, required {required:.3e}")]
    SolveAccuracy { residual: f64, required: f64 },

    #[error("Newton iteration for the state equation stalled at residual {residual:.3e}")]
    NewtonFailure { residual: f64 },

    #[error("enumeration would visit {candidates} candidates, budget is {budget}")]
    BudgetExceeded { candidates: u128, budget: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
