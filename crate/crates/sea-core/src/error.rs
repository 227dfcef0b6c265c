use thiserror::Error;

/// Errors produced by state construction, metric evaluation, the steepest-ascent
/// solve, integration, and the MaxEnt dual solve.
#[derive(Debug, Error)]
pub enum SeaError {
    #[error("entry {index} is negative: {value}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("entry {index} is not finite")]
    NonFiniteEntry { index: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("constraint set must contain exactly one all-ones row, found {found}")]
    UnityRowCount { found: usize },

    #[error("unity constraint target must be 1, got {value}")]
    UnityTarget { value: f64 },

    #[error("linearly dependent constraint rows: {detail}")]
    DependentConstraints { detail: String },

    #[error("matrix is not symmetric: |G[{i},{j}] - G[{j},{i}]| = {skew:e}")]
    NotSymmetric { i: usize, j: usize, skew: f64 },

    #[error("matrix is not positive-definite: {detail}")]
    NotPositiveDefinite { detail: String },

    #[error("metric weight {index} is not strictly positive: {value}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("form is too ill-conditioned to invert: condition estimate {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("degenerate constraints on current support: near-null combination {combination}")]
    DegenerateConstraints { combination: String },

    #[error("relaxation time undefined at equilibrium")]
    TauUndefinedAtEquilibrium,

    #[error("determinant form supports at most {max} constraints, got {got}")]
    DeterminantFormTooLarge { got: usize, max: usize },

    #[error("step size underflow: dt = {dt:.3e}")]
    StepSizeUnderflow { dt: f64 },

    #[error("constraint projection failed: {detail}")]
    ProjectionFailure { detail: String },

    #[error("targets are not attainable on the support: {detail}")]
    InfeasibleTargets { detail: String },

    #[error("dual solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    DualSolveFailed { iterations: u32, residual: f64 },

    #[error("state support is not contained in the reference support (component {index})")]
    SupportViolation { index: usize },

    #[error("internal consistency check failed: {detail}")]
    InternalConsistency { detail: String },

    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },

    #[error("invalid density: {detail}")]
    InvalidDensity { detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SeaError>;
