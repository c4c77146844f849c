use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("kernel truncation order must be at least 1")]
    EmptyKernel,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("grid of size {n} is invalid: {reason}")]
    InvalidGrid { n: usize, reason: &'static str },
    #[error("grid of size {n} is below the floor {min} for {modes} modes")]
    GridTooSmall { n: usize, min: usize, modes: usize },
    #[error("symmetry violation: discarded content {residual:e} exceeds tolerance {tol:e}")]
    SymmetryViolation { residual: f64, tol: f64 },
    #[error("threshold undefined: all kernel coefficients vanish")]
    UndefinedThreshold,
    #[error("mode {0} is undefined (zero or missing coefficient)")]
    UndefinedMode(usize),
    #[error("mode count mismatch: expected {expected}, got {got}")]
    ModeMismatch { expected: usize, got: usize },
    #[error("density is not strictly positive")]
    NonPositiveDensity,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("corrector failed after {iterations} iterations (residual {residual:e})")]
    CorrectorFailed { iterations: usize, residual: f64 },
}
