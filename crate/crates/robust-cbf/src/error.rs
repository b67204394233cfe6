//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A caller violated a shape contract (vector/matrix dimensions).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument was outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A scenario failed its load-time checks (containment, initial
    /// condition, positivity of dt, ...).
    #[error("setup error: {0}")]
    Setup(String),

    /// Non-finite values or a solver breakdown.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A constraint system with no solution.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative method exhausted its budget.
    #[error("did not converge: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
