use thiserror::Error;

/// Errors raised by the operator algebra, solvers and simulators.
///
/// Numerical payloads are carried as `f64` regardless of the scalar type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid mismatch: {left} cells vs {right} cells")]
    GridMismatch { left: usize, right: usize },

    #[error("a grid needs at least one cell")]
    EmptyGrid,

    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },

    #[error("kernel is not symmetric (max |K_ij - K_ji| = {deviation:e})")]
    Asymmetric { deviation: f64 },

    #[error("operator is not positive semidefinite: spectral value {eigenvalue:e}")]
    NegativeSpectrum { eigenvalue: f64 },

    #[error("operator has identity part {scalar} and is not trace-class")]
    NotTraceClass { scalar: f64 },

    #[error("operator is not invertible: smallest spectral value {min:e}")]
    NotInvertible { min: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("Riccati solution lost positivity at time index {index} (spectral value {eigenvalue:e})")]
    Instability { index: usize, eigenvalue: f64 },

    #[error("Riccati solution exceeds its uniform bound at time index {index}: {norm} > {bound}")]
    BoundViolation { index: usize, norm: f64, bound: f64 },

    #[error("simulation diverged at step {step}")]
    Divergence { step: usize },

    #[error("need at least {needed} sample paths, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("time {t} is not on the time grid")]
    OffGrid { t: f64 },

    #[error("invalid time grid: {0}")]
    TimeGrid(String),

    #[error("{what} is not low rank with respect to the basis (residual {residual:e})")]
    NotLowRank { what: &'static str, residual: f64 },

    #[error("basis function {index} is linearly dependent on its predecessors")]
    DependentBasis { index: usize },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
