use thiserror::Error;

use crate::solver::SolveResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An exponent, parameter or argument is outside its admissible range.
    #[error("range violation: {0}")]
    RangeViolation(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expression error in `{expr}`: {reason}")]
    Expression { expr: String, reason: String },

    #[error("boundary violation: {0}")]
    BoundaryViolation(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("bisection did not converge: {0}")]
    BisectionFailed(String),

    #[error("scan exhausted: {0}")]
    ScanExhausted(String),

    #[error("variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("proximity condition violated for member {member}: worst margin {worst_margin:e}")]
    ProximityViolation { member: usize, worst_margin: f64 },

    /// The descent did not reach the gradient tolerance. `partial` holds the
    /// trajectory up to and including the best iterate of the failing level.
    #[error(
        "descent did not converge at level {level}: |grad| = {grad_norm:e} after {iterations} iterations"
    )]
    NonConvergence {
        level: usize,
        iterations: usize,
        grad_norm: f64,
        partial: Option<Box<SolveResult>>,
    },
}
