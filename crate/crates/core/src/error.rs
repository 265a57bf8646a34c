use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation only defined for sphere dimension {supported}, got q = {got}")]
    UnsupportedDimension { supported: usize, got: usize },
    #[error("overflow evaluating {0}; use the log-space variant")]
    Overflow(&'static str),
    #[error("quadrature failed to reach tolerance {tol:e} (estimate {estimate:e}, error {error:e})")]
    QuadratureFailure { tol: f64, estimate: f64, error: f64 },
    #[error("argument out of domain: {0}")]
    DomainError(String),
    #[error("kernel argument must be non-negative, got {0}")]
    NegativeArgument(f64),
    #[error("kernel does not support this operation: {0}")]
    UnsupportedKernel(String),
    #[error("mean shift numerator vanished; no update is defined at this point")]
    DegenerateStep,
    #[error("no start point produced a converged trajectory")]
    NoConvergedTrajectory,
    #[error("density decreased along a trajectory at iteration {iteration}: {before:e} -> {after:e}")]
    AscentViolation { iteration: usize, before: f64, after: f64 },
    #[error("every mixture component vanishes at this parameter")]
    AllZero,
    #[error("inner M-step iteration did not converge in {0} iterations")]
    InnerDivergence(usize),
    #[error("mixture component {0} lost all responsibility")]
    EmptyComponent(usize),
    #[error("gradient norm is zero; the iteration map is undefined")]
    ZeroGradient,
    #[error("fewer than 3 usable contraction ratios ({0})")]
    InsufficientIterations(usize),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("input file contains no data rows")]
    EmptyFile,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
