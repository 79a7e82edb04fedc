use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("domain collapsed: delta = {delta} must be below r/c0 = {limit}")]
    DomainCollapsed { delta: f64, limit: f64 },

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("point {point:?} lies outside the target domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("target is not concave (smallest eigenvalue of -Hessian = {min_eigenvalue})")]
    NotConcave { min_eigenvalue: f64 },

    #[error("initialization rejection sampling failed: acceptance rate {acceptance:.2e}")]
    InitRejectionFailure { acceptance: f64 },

    #[error("non-finite weight after SGD step {step}")]
    NumericalBlowup { step: u64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("solver instability at step {step}: cell {cell} has density {value:e}")]
    SolverInstability { step: u64, cell: usize, value: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("bad input: {0}")]
    BadInput(String),

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
