use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the model domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("finite-difference stencil along coordinate {coordinate} leaves the domain at {point:?}")]
    StepLeavesDomain { coordinate: usize, point: Vec<f64> },

    #[error("trajectory left the domain at t = {t} (point {point:?})")]
    DomainExit { t: f64, point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("metric is not positive-definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },

    #[error("degenerate pullback: jacobian singular values {singular_values:?}")]
    DegeneratePullback { singular_values: Vec<f64> },

    #[error("singular mass matrix: |det M| / |det g| = {ratio:e}")]
    SingularMassMatrix { ratio: f64 },

    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("shooting jacobian is singular (conjugate point?)")]
    SingularShootingJacobian,

    #[error("quadrature not converged: change {change:e} exceeds {tolerance:e}")]
    QuadratureNotConverged { change: f64, tolerance: f64 },

    #[error("density integrates to {integral}, not 1")]
    NormalizationFailure { integral: f64 },

    #[error("non-finite integrand at x = {x}")]
    NonFiniteIntegrand { x: f64 },

    #[error("skewness extraction divides by 2*alpha; unavailable at alpha = 0")]
    SkewnessUnavailable,

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
