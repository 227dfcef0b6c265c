//! Steepest-entropy-ascent relaxation in square-root probability space.
//!
//! A discrete probability distribution is represented by its square roots
//! γ_j = √p_j. Given conserved-property vectors {C_i} (always including
//! unity) and a symmetric positive-definite metric Ĝ, the flow
//!
//! ```text
//! dγ/dt = Π_γ = (1/k_B τ) Ĝ⁻¹ (Φ − k_B Σ_i β_i Ψ_i)
//! ```
//!
//! follows the direction of steepest entropy ascent compatible with the
//! conservation constraints and drives any initial distribution to the
//! maximum-entropy distribution with the same mean values. The crate
//! provides the state and metric machinery, the instantaneous construction
//! with its diagnostics (affinity, entropy production, degree of
//! disequilibrium, metric speed), an adaptive embedded Runge-Kutta
//! integrator with conservation monitoring and path-length accumulation,
//! an independent MaxEnt endpoint solver, a phase-space grid adapter, and
//! the `sea` batch CLI.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod maxent;
pub mod metric;
pub mod phase;
pub mod report;
pub mod state;

pub use dynamics::{
    entropy_production, SeaModel, SeaSolution, TauPolicy, CRAMER_MAX_CONSTRAINTS, DOD_UNDERFLOW,
    GRAM_CONDITION_LIMIT,
};
pub use error::{Result, SeaError};
pub use integrate::{
    entropy_balance_check, integrate, path_length, step, BalanceReport, IntegratorConfig,
    PathLength, RecordEvery, StepOutcome, TrajectoryRecord, TrajectorySample, TrajectoryStatus,
};
pub use maxent::{
    disequilibrium_report, kl_divergence, solve_maxent, DisequilibriumReport, MaxEntResult,
};
pub use metric::{DiagonalRule, MetricField, MetricForm, CONDITION_LIMIT};
pub use phase::{discretize, relax_phase, PhaseGrid, PhaseModel, Potential};
pub use state::{
    constraint_gradients_psi, entropy, entropy_gradient_phi, gradient_vectors, inner_product,
    mean_value, psi_row, ConstraintSet, GradientVectors, SquareRootState, SupportMask,
    DEFAULT_SUPPORT_EPSILON,
};
