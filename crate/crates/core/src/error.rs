use thiserror::Error;

/// Failures raised by the solvers.
///
/// Dimension and PSD problems in user input are reported through
/// [`crate::ValidationReport`] instead; these variants cover what can go
/// wrong once the numerics start.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteerError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "input Gramian is singular (eigenvalue ratio {ratio:.3e}); the system is not controllable over the horizon"
    )]
    SingularGramian { ratio: f64 },

    #[error("initial covariance is singular (smallest eigenvalue {min_eigenvalue:.3e})")]
    SingularInitialCovariance { min_eigenvalue: f64 },

    #[error("selected terminal block is not controllable (eigenvalue ratio {ratio:.3e})")]
    ReducedUncontrollable { ratio: f64 },

    #[error("terminal covariance minus last-step noise is not PSD (smallest eigenvalue {min_eigenvalue:.3e})")]
    Infeasible { min_eigenvalue: f64 },

    #[error("I + W_k Lambda is singular at k = {k}")]
    SingularClosedLoop { k: usize },

    #[error("Lambda solve did not converge after {iterations} iterations (best relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Lambda violates the second-order condition (smallest eigenvalue {min_eigenvalue:.3e} at k = {k})")]
    SecondOrderViolation { k: usize, min_eigenvalue: f64 },

    #[error("Riccati step {k} is indefinite: I + B'PB has smallest eigenvalue {min_eigenvalue:.3e}")]
    IndefiniteStep { k: usize, min_eigenvalue: f64 },

    #[error("policy step {k} is out of range (expected step {expected}, horizon {horizon})")]
    StepOutOfRange { k: usize, expected: usize, horizon: usize },

    #[error("mean constraint residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    MeanResidual { residual: f64, tolerance: f64 },
}

pub type Result<T, E = SteerError> = std::result::Result<T, E>;
