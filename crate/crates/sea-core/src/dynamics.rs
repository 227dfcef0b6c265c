//! The instantaneous steepest-entropy-ascent construction.
//!
//! Among all tangent directions that conserve every ⟨C_i⟩ and travel a fixed
//! metric distance per unit time, the SEA direction maximizes the entropy
//! production rate. Stationarity of the associated Lagrangian gives
//!
//! ```text
//! Π_γ = (1/k_B τ) Ĝ⁻¹ Λ          Λ = Φ − k_B Σ_i β_i Ψ_i
//! k_B Σ_j (Ψ_i|Ĝ⁻¹|Ψ_j) β_j = (Ψ_i|Ĝ⁻¹|Φ)
//! ```
//!
//! Λ is the generalized affinity: the entropy gradient minus its projection
//! onto the span of the constraint gradients, zero exactly at equilibrium.
//! The scalar diagnostics follow:
//!
//! ```text
//! DoD = (Λ|Ĝ⁻¹|Λ) ≥ 0            degree of disequilibrium
//! Π_S = (Φ|Π_γ)   = DoD/(k_B τ)  entropy production rate
//! (Π_γ|Ĝ|Π_γ)     = DoD/(k_B τ)² squared metric speed
//! ```
//!
//! The multipliers are solved through a symmetric positive-definite
//! factorization of the Gram matrix; [`SeaModel::sea_direction_cramer`]
//! retains the equivalent ratio-of-determinants form as an independent
//! cross-check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SeaError};
use crate::metric::{MetricField, MetricForm};
use crate::state::{
    phi_component, SquareRootState, SupportMask, ConstraintSet, DEFAULT_SUPPORT_EPSILON,
};

/// Below this degree of disequilibrium the direction is set to exactly zero
/// and the state is declared converged, avoiding 0/0 in prescribed-τ modes.
pub const DOD_UNDERFLOW: f64 = 1e-24;

/// Gram-matrix condition guard: beyond this the constraints are declared
/// degenerate on the current support.
pub const GRAM_CONDITION_LIMIT: f64 = 1e10;

/// Largest constraint count accepted by the determinant form.
pub const CRAMER_MAX_CONSTRAINTS: usize = 6;

/// How the relaxation-time multiplier τ is chosen along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum TauPolicy {
    /// Fixed τ.
    Constant(f64),
    /// τ = DoD/(k_B Π_S*): the trajectory realizes the prescribed entropy
    /// production rate Π_S*.
    PrescribedEntropyProduction(f64),
    /// τ = √DoD/(k_B v*): the trajectory realizes the prescribed metric
    /// speed v* = √((Π_γ|Ĝ|Π_γ)).
    PrescribedSpeed(f64),
}

impl TauPolicy {
    pub fn validate(&self) -> Result<()> {
        let v = match self {
            TauPolicy::Constant(v) => v,
            TauPolicy::PrescribedEntropyProduction(v) => v,
            TauPolicy::PrescribedSpeed(v) => v,
        };
        if !v.is_finite() || *v <= 0.0 {
            return Err(SeaError::InvalidConfig {
                detail: format!("tau policy value must be finite and positive, got {v}"),
            });
        }
        Ok(())
    }
}

/// The instantaneous SEA output at one state.
///
/// `entropy_production` is evaluated as DoD/(k_B τ), which stays accurate
/// arbitrarily close to equilibrium; `entropy_production_via_gradient`
/// carries the independent route (Φ|Π_γ), which the construction checks
/// against it on every evaluation. `speed` is the metric speed
/// √((Π_γ|Ĝ|Π_γ)) = √DoD/(k_B τ); the accumulated path length uses
/// dℓ = 2·speed·dt.
#[derive(Debug, Clone)]
pub struct SeaSolution {
    /// Lagrange multipliers β_i, one per constraint.
    pub beta: DVector<f64>,
    /// Relaxation time produced by the τ policy at this state.
    pub tau: f64,
    /// Generalized affinity Λ (full length, zero off-support).
    pub lambda: DVector<f64>,
    /// SEA direction Π_γ = dγ/dt (full length, zero off-support).
    pub pi_gamma: DVector<f64>,
    /// Entropy production rate Π_S = DoD/(k_B τ) ≥ 0.
    pub entropy_production: f64,
    /// The same rate evaluated as (Φ|Π_γ).
    pub entropy_production_via_gradient: f64,
    /// Degree of disequilibrium (Λ|Ĝ⁻¹|Λ) ≥ 0.
    pub dod: f64,
    /// Metric speed √((Π_γ|Ĝ|Π_γ)).
    pub speed: f64,
    /// True when DoD fell below [`DOD_UNDERFLOW`] and Π_γ was set to zero.
    pub converged: bool,
    /// Boltzmann constant the solution was computed with.
    pub k_b: f64,
    // Roundoff bound for the rate cross-check, from the construction scales.
    pub(crate) consistency_floor: f64,
}

/// A constraint set, metric field, τ policy, and k_B bundled into the model
/// whose flow is dγ/dt = Π_γ.
#[derive(Debug, Clone)]
pub struct SeaModel {
    pub constraints: ConstraintSet,
    pub metric: MetricField,
    pub tau_policy: TauPolicy,
    k_b: f64,
    support_epsilon: f64,
}

// Masked gradient data shared by every operation: Φ, Ψ_i, the concrete
// metric form, and their Ĝ⁻¹ images.
pub(crate) struct MaskedParts {
    pub(crate) phi: DVector<f64>,
    pub(crate) psi: Vec<DVector<f64>>,
    pub(crate) form: MetricForm,
    pub(crate) ginv_phi: DVector<f64>,
    pub(crate) ginv_psi: Vec<DVector<f64>>,
}

impl SeaModel {
    pub fn new(
        constraints: ConstraintSet,
        metric: MetricField,
        tau_policy: TauPolicy,
    ) -> Result<Self> {
        tau_policy.validate()?;
        Ok(Self {
            constraints,
            metric,
            tau_policy,
            k_b: 1.0,
            support_epsilon: DEFAULT_SUPPORT_EPSILON,
        })
    }

    pub fn with_k_b(mut self, k_b: f64) -> Result<Self> {
        if !k_b.is_finite() || k_b <= 0.0 {
            return Err(SeaError::InvalidConfig {
                detail: format!("k_B must be finite and positive, got {k_b}"),
            });
        }
        self.k_b = k_b;
        Ok(self)
    }

    pub fn k_b(&self) -> f64 {
        self.k_b
    }

    pub fn support_epsilon(&self) -> f64 {
        self.support_epsilon
    }

    pub fn support_of(&self, state: &SquareRootState) -> SupportMask {
        state.support_mask(self.support_epsilon)
    }

    pub(crate) fn assemble(&self, state: &SquareRootState, mask: &SupportMask) -> Result<MaskedParts> {
        if state.len() != self.constraints.n() {
            return Err(SeaError::LengthMismatch {
                expected: self.constraints.n(),
                found: state.len(),
            });
        }
        if mask.len() != state.len() {
            return Err(SeaError::LengthMismatch {
                expected: state.len(),
                found: mask.len(),
            });
        }
        let idx = mask.indices();
        let m = idx.len();
        let gamma = state.gamma();
        let phi = DVector::from_iterator(m, idx.iter().map(|&j| phi_component(gamma[j], self.k_b)));
        let psi: Vec<DVector<f64>> = self
            .constraints
            .rows()
            .iter()
            .map(|row| {
                DVector::from_iterator(m, idx.iter().map(|&j| 2.0 * gamma[j] * row[j]))
            })
            .collect();
        let form = self.metric.evaluate_masked(state, mask)?;
        let ginv_phi = form.apply_inverse(&phi)?;
        let ginv_psi = psi
            .iter()
            .map(|p| form.apply_inverse(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(MaskedParts {
            phi,
            psi,
            form,
            ginv_phi,
            ginv_psi,
        })
    }

    pub(crate) fn gram_of(&self, parts: &MaskedParts) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let c = parts.psi.len();
        let mut a = DMatrix::zeros(c, c);
        let mut b = DVector::zeros(c);
        for i in 0..c {
            b[i] = parts.psi[i].dot(&parts.ginv_phi);
            for j in i..c {
                // (Ψ_i|Ĝ⁻¹|Ψ_j) is symmetric; fill both triangles from one dot.
                let v = parts.psi[i].dot(&parts.ginv_psi[j]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        self.check_gram(&a)?;
        Ok((a, b))
    }

    // Degeneracy guard on the Gram matrix, naming the near-null combination
    // of constraint rows when it fires.
    fn check_gram(&self, a: &DMatrix<f64>) -> Result<()> {
        let c = a.nrows();
        // Scale-invariant test on the correlation-normalized Gram matrix so
        // constraints in wildly different units are judged fairly.
        let mut scaled = a.clone();
        let diag: Vec<f64> = (0..c).map(|i| a[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
        for i in 0..c {
            for j in 0..c {
                scaled[(i, j)] /= diag[i] * diag[j];
            }
        }
        let eigen = scaled.symmetric_eigen();
        let emax = eigen.eigenvalues.max();
        let emin = eigen.eigenvalues.min();
        if !(emin > 0.0) || emax / emin > GRAM_CONDITION_LIMIT {
            let k = eigen.eigenvalues.imin();
            let combo: Vec<String> = (0..c)
                .map(|i| {
                    format!(
                        "{:+.3e}·{}",
                        eigen.eigenvectors[(i, k)] / diag[i],
                        self.constraints.labels()[i]
                    )
                })
                .collect();
            return Err(SeaError::DegenerateConstraints {
                combination: combo.join(" "),
            });
        }
        Ok(())
    }

    /// The multiplier system: A_ij = (Ψ_i|Ĝ⁻¹|Ψ_j), b_i = (Ψ_i|Ĝ⁻¹|Φ),
    /// restricted to the active support.
    pub fn gram_system(
        &self,
        state: &SquareRootState,
        mask: &SupportMask,
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let parts = self.assemble(state, mask)?;
        self.gram_of(&parts)
    }

    /// Solves k_B A β = b for the multipliers by Cholesky factorization,
    /// with one refinement pass.
    pub fn solve_multipliers(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_gram(a)?;
        let chol = nalgebra::Cholesky::new(a.clone()).ok_or_else(|| {
            SeaError::DegenerateConstraints {
                combination: "Gram matrix is not positive-definite".to_string(),
            }
        })?;
        let mut x = chol.solve(b);
        let r = b - a * &x;
        x += chol.solve(&r);
        Ok(x / self.k_b)
    }

    /// Generalized affinity Λ = Φ − k_B Σ_i β_i Ψ_i for given multipliers,
    /// full length with zeros off-support.
    pub fn affinity(
        &self,
        state: &SquareRootState,
        mask: &SupportMask,
        beta: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if beta.len() != self.constraints.c() {
            return Err(SeaError::LengthMismatch {
                expected: self.constraints.c(),
                found: beta.len(),
            });
        }
        let parts = self.assemble(state, mask)?;
        let lambda = Self::lambda_of(&parts, beta, self.k_b);
        Ok(mask.scatter(&lambda))
    }

    /// Multipliers and affinity in one call.
    pub fn affinity_auto(
        &self,
        state: &SquareRootState,
        mask: &SupportMask,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let parts = self.assemble(state, mask)?;
        let (a, b) = self.gram_of(&parts)?;
        let beta = self.solve_multipliers(&a, &b)?;
        let lambda = Self::lambda_of(&parts, &beta, self.k_b);
        Ok((beta, mask.scatter(&lambda)))
    }

    fn lambda_of(parts: &MaskedParts, beta: &DVector<f64>, k_b: f64) -> DVector<f64> {
        let mut lambda = parts.phi.clone();
        for (i, psi) in parts.psi.iter().enumerate() {
            lambda.axpy(-k_b * beta[i], psi, 1.0);
        }
        lambda
    }

    /// The SEA direction Π_γ = (1/k_B τ) Ĝ⁻¹ Λ with every scalar diagnostic,
    /// via the positive-definite multiplier solve.
    pub fn sea_direction(
        &self,
        state: &SquareRootState,
        mask: &SupportMask,
    ) -> Result<SeaSolution> {
        let parts = self.assemble(state, mask)?;
        let (a, b) = self.gram_of(&parts)?;
        let beta = self.solve_multipliers(&a, &b)?;

        let lambda = Self::lambda_of(&parts, &beta, self.k_b);
        // Solve Ĝ x = Λ directly: assembling x from the pre-solved images of
        // Φ and Ψ_i would re-run their cancellation inside the solve and
        // lose relative accuracy once Λ is small.
        let ginv_lambda = parts.form.apply_inverse(&lambda)?;
        self.finish(parts, mask, beta, lambda, ginv_lambda)
    }

    /// Same SEA direction through the ratio-of-determinants form: the
    /// bordered Gram determinant is expanded along its vector-valued first
    /// row into (c+1) scalar minors. Kept as an independent cross-check of
    /// the factorization route; cost grows factorially, so c ≤ 6.
    pub fn sea_direction_cramer(
        &self,
        state: &SquareRootState,
        mask: &SupportMask,
    ) -> Result<SeaSolution> {
        let c = self.constraints.c();
        if c > CRAMER_MAX_CONSTRAINTS {
            return Err(SeaError::DeterminantFormTooLarge {
                got: c,
                max: CRAMER_MAX_CONSTRAINTS,
            });
        }
        let parts = self.assemble(state, mask)?;
        let (a, b) = self.gram_of(&parts)?;
        let det_a = a.clone().determinant();
        let scale: f64 = (0..c).map(|i| a[(i, i)].max(f64::MIN_POSITIVE)).product();
        if !det_a.is_finite() || det_a.abs() <= 1e-14 * scale {
            return Err(SeaError::DegenerateConstraints {
                combination: format!("denominator determinant {det_a:e} vanishes"),
            });
        }

        // Bordered matrix: first row (Ĝ⁻¹Φ, Ĝ⁻¹Ψ_1, …, Ĝ⁻¹Ψ_c), then rows
        // ((Ψ_i|Ĝ⁻¹|Φ), (Ψ_i|Ĝ⁻¹|Ψ_1), …). Deleting the first row leaves the
        // c×(c+1) block [b | A]; minor k deletes column k of it.
        let ba = {
            let mut m = DMatrix::zeros(c, c + 1);
            m.column_mut(0).copy_from(&b);
            for j in 0..c {
                m.column_mut(j + 1).copy_from(&a.column(j));
            }
            m
        };
        let minor = |k: usize| -> f64 {
            let mut sub = DMatrix::zeros(c, c);
            let mut col = 0;
            for j in 0..=c {
                if j == k {
                    continue;
                }
                sub.column_mut(col).copy_from(&ba.column(j));
                col += 1;
            }
            sub.determinant()
        };

        let m = mask.active_count();
        let mut numerator = DVector::zeros(m); // Σ_k (−1)^k M_k Ĝ⁻¹v_k = det_a·Ĝ⁻¹Λ
        let mut lambda_num = DVector::zeros(m); // same expansion on the raw vectors
        let mut beta = DVector::zeros(c);
        for k in 0..=c {
            let mk = minor(k);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k == 0 {
                numerator.axpy(sign * mk, &parts.ginv_phi, 1.0);
                lambda_num.axpy(sign * mk, &parts.phi, 1.0);
            } else {
                numerator.axpy(sign * mk, &parts.ginv_psi[k - 1], 1.0);
                lambda_num.axpy(sign * mk, &parts.psi[k - 1], 1.0);
                // (−1)^k M_k = −det(A with column k replaced by b), so the
                // Cramer multipliers fall out of the same minors.
                beta[k - 1] = -sign * mk / (self.k_b * det_a);
            }
        }
        let lambda = lambda_num / det_a;
        let ginv_lambda = numerator / det_a;
        self.finish(parts, mask, beta, lambda, ginv_lambda)
    }

    // Shared tail of both routes: τ resolution, diagnostics, and the
    // internal consistency checks.
    fn finish(
        &self,
        parts: MaskedParts,
        mask: &SupportMask,
        beta: DVector<f64>,
        lambda: DVector<f64>,
        ginv_lambda: DVector<f64>,
    ) -> Result<SeaSolution> {
        let dod = lambda.dot(&ginv_lambda).max(0.0);
        if dod < DOD_UNDERFLOW {
            let tau = match self.tau_policy {
                TauPolicy::Constant(v) => v,
                // τ is undefined at equilibrium in the prescribed modes, but
                // Π_γ = 0 regardless; an inert placeholder keeps the
                // converged solution usable.
                _ => 1.0,
            };
            return Ok(SeaSolution {
                beta,
                tau,
                lambda: mask.scatter(&lambda),
                pi_gamma: DVector::zeros(mask.len()),
                entropy_production: 0.0,
                entropy_production_via_gradient: 0.0,
                dod,
                speed: 0.0,
                converged: true,
                k_b: self.k_b,
                consistency_floor: 0.0,
            });
        }

        let tau = tau_from_dod(&self.tau_policy, dod, self.k_b)?;
        let kbt = self.k_b * tau;
        let pi = ginv_lambda / kbt;
        let pi_s = dod / kbt;
        let pi_s_gradient = parts.phi.dot(&pi);

        // (Φ|Π_γ) must reproduce DoD/(k_Bτ). Their difference is the
        // roundoff of the decomposition (Φ − k_BΣβΨ)·Π, dominated by the
        // multiplier-solve residual, which lives on the scale of the
        // un-cancelled construction. Bound it explicitly so the check stays
        // meaningful arbitrarily close to equilibrium.
        let m = parts.phi.len() as f64;
        let raw_scale = parts.phi.norm()
            + parts
                .psi
                .iter()
                .enumerate()
                .map(|(i, psi)| (self.k_b * beta[i]).abs() * psi.norm())
                .sum::<f64>();
        let raw_image = parts.ginv_phi.norm()
            + parts
                .ginv_psi
                .iter()
                .enumerate()
                .map(|(i, gp)| (self.k_b * beta[i]).abs() * gp.norm())
                .sum::<f64>();
        let cond_g = parts.form.condition_estimate();
        let floor =
            (1e-12 * m.sqrt() + 1e-14 * cond_g) * raw_scale * raw_image / kbt;
        let tol = (1e-10 * pi_s.abs()).max(floor);
        if (pi_s_gradient - pi_s).abs() > tol {
            return Err(SeaError::InternalConsistency {
                detail: format!(
                    "entropy production routes disagree: (Phi|Pi) = {pi_s_gradient:e}, DoD/(k_B tau) = {pi_s:e}"
                ),
            });
        }

        // Speed identity: (Π_γ|Ĝ|Π_γ) = DoD/(k_Bτ)². Both sides are
        // positive quadratics in the same vector, so the comparison is
        // relative up to a metric-solve residual amplified by cond(Ĝ).
        let speed = parts.form.g_norm(&pi)?;
        let speed_sq_expected = dod / (kbt * kbt);
        let rel = (1e-10f64).max(1e-13 * cond_g).max(1e-13 * m.sqrt());
        if (speed * speed - speed_sq_expected).abs()
            > rel * speed_sq_expected + floor / kbt
        {
            return Err(SeaError::InternalConsistency {
                detail: format!(
                    "speed identity violated: g_norm^2 = {:e}, DoD/(k_B tau)^2 = {speed_sq_expected:e}",
                    speed * speed
                ),
            });
        }

        Ok(SeaSolution {
            beta,
            tau,
            lambda: mask.scatter(&lambda),
            pi_gamma: mask.scatter(&pi),
            entropy_production: pi_s,
            entropy_production_via_gradient: pi_s_gradient,
            dod,
            speed,
            converged: false,
            k_b: self.k_b,
            consistency_floor: floor,
        })
    }

    /// DoD = (Λ|Ĝ⁻¹|Λ) at a state.
    pub fn degree_of_disequilibrium(
        &self,
        state: &SquareRootState,
        mask: &SupportMask,
    ) -> Result<f64> {
        let parts = self.assemble(state, mask)?;
        let (a, b) = self.gram_of(&parts)?;
        let beta = self.solve_multipliers(&a, &b)?;
        let lambda = Self::lambda_of(&parts, &beta, self.k_b);
        let ginv_lambda = parts.form.apply_inverse(&lambda)?;
        Ok(lambda.dot(&ginv_lambda).max(0.0))
    }

    /// The τ the policy yields at a state. The prescribed modes are undefined
    /// at equilibrium.
    pub fn resolve_tau(&self, state: &SquareRootState, mask: &SupportMask) -> Result<f64> {
        match self.tau_policy {
            TauPolicy::Constant(v) => Ok(v),
            _ => {
                let dod = self.degree_of_disequilibrium(state, mask)?;
                if dod < DOD_UNDERFLOW {
                    return Err(SeaError::TauUndefinedAtEquilibrium);
                }
                tau_from_dod(&self.tau_policy, dod, self.k_b)
            }
        }
    }
}

// τ from the policy given DoD at the evaluation state:
//   constant:        τ
//   prescribed Π_S*: τ = DoD/(k_B Π_S*)
//   prescribed v*:   τ = √DoD/(k_B v*)
fn tau_from_dod(policy: &TauPolicy, dod: f64, k_b: f64) -> Result<f64> {
    let tau = match policy {
        TauPolicy::Constant(v) => *v,
        TauPolicy::PrescribedEntropyProduction(pi_s) => dod / (k_b * pi_s),
        TauPolicy::PrescribedSpeed(v) => dod.sqrt() / (k_b * v),
    };
    if !tau.is_finite() || tau <= 0.0 {
        return Err(SeaError::TauUndefinedAtEquilibrium);
    }
    Ok(tau)
}

/// Returns the entropy production rate of a computed solution, re-asserting
/// the agreement of its two evaluation routes. A failure signals a
/// multiplier-solve defect.
pub fn entropy_production(solution: &SeaSolution) -> Result<f64> {
    let expected = solution.dod / (solution.k_b * solution.tau);
    let via_gradient = solution.entropy_production_via_gradient;
    let tol = (1e-10 * expected.abs()).max(solution.consistency_floor);
    if (via_gradient - expected).abs() > tol {
        return Err(SeaError::InternalConsistency {
            detail: format!(
                "entropy production routes disagree: (Phi|Pi) = {via_gradient:e}, DoD/(k_B tau) = {expected:e}"
            ),
        });
    }
    if expected < -1e-12 {
        return Err(SeaError::InternalConsistency {
            detail: format!("negative entropy production {expected:e}"),
        });
    }
    Ok(via_gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(p: &[f64]) -> SquareRootState {
        SquareRootState::from_probabilities(p).unwrap()
    }

    fn norm_only_model(n: usize, metric: MetricField, tau: f64) -> SeaModel {
        let rows = vec![DVector::from_element(n, 1.0)];
        let set = ConstraintSet::new(rows, vec![1.0], None).unwrap();
        SeaModel::new(set, metric, TauPolicy::Constant(tau)).unwrap()
    }

    fn energy_model(e: &[f64], state: &SquareRootState, metric: MetricField) -> SeaModel {
        let rows = vec![DVector::from_row_slice(e)];
        let set = ConstraintSet::for_state(rows, Some(vec!["H".into()]), state).unwrap();
        SeaModel::new(set, metric, TauPolicy::Constant(1.0)).unwrap()
    }

    #[test]
    fn gram_normalization_only() {
        let s = state(&[0.6, 0.3, 0.1]);
        let model = norm_only_model(3, MetricField::uniform(), 1.0);
        let mask = model.support_of(&s);
        let (a, b) = model.gram_system(&s, &mask).unwrap();
        // (Ψ_I|Ψ_I) = 4Σγ² = 4 and (Ψ_I|Φ) = 4S for a normalized state.
        assert_relative_eq!(a[(0, 0)], 4.0, max_relative = 1e-12);
        let s_val = crate::state::entropy(&s, 1.0);
        assert_relative_eq!(b[0], 4.0 * s_val, max_relative = 1e-12);
    }

    #[test]
    fn multipliers_normalization_only() {
        let s = state(&[0.6, 0.3, 0.1]);
        let model = norm_only_model(3, MetricField::uniform(), 1.0);
        let mask = model.support_of(&s);
        let (a, b) = model.gram_system(&s, &mask).unwrap();
        let beta = model.solve_multipliers(&a, &b).unwrap();
        assert_relative_eq!(
            beta[0],
            crate::state::entropy(&s, 1.0),
            max_relative = 1e-12
        );

        let half = state(&[0.5, 0.5]);
        let model = norm_only_model(2, MetricField::uniform(), 1.0);
        let mask = model.support_of(&half);
        let (a, b) = model.gram_system(&half, &mask).unwrap();
        let beta = model.solve_multipliers(&a, &b).unwrap();
        assert_relative_eq!(beta[0], std::f64::consts::LN_2, max_relative = 1e-12);
    }

    #[test]
    fn multiplier_residual_is_small() {
        let s = state(&[0.5, 0.2, 0.2, 0.1]);
        let e = DVector::from_vec(vec![0.0, 1.0, 2.0, 3.0]);
        let model = energy_model(e.as_slice(), &s, MetricField::uniform());
        let mask = model.support_of(&s);
        let (a, b) = model.gram_system(&s, &mask).unwrap();
        let beta = model.solve_multipliers(&a, &b).unwrap();
        let residual = (&a * &beta * model.k_b() - &b).norm();
        assert!(residual <= 1e-10 * b.norm(), "residual {residual}");
    }

    #[test]
    fn gibbs_state_multipliers_recover_exponents() {
        // p_j ∝ exp(−0.7 e_j) must give β_H = 0.7 and β_I = ln Z exactly.
        let e: [f64; 4] = [0.0, 1.0, 2.0, 3.5];
        let w: Vec<f64> = e.iter().map(|&x| (-0.7 * x).exp()).collect();
        let z: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|&x| x / z).collect();
        let s = state(&p);
        for k_b in [1.0, 2.0] {
            let rows = vec![DVector::from_row_slice(&e)];
            let set = ConstraintSet::for_state(rows, Some(vec!["H".into()]), &s).unwrap();
            let model = SeaModel::new(set, MetricField::uniform(), TauPolicy::Constant(1.0))
                .unwrap()
                .with_k_b(k_b)
                .unwrap();
            let mask = model.support_of(&s);
            let (a, b) = model.gram_system(&s, &mask).unwrap();
            let beta = model.solve_multipliers(&a, &b).unwrap();
            assert_relative_eq!(beta[0], 0.7, max_relative = 1e-10);
            assert_relative_eq!(beta[1], z.ln(), max_relative = 1e-10);
        }
    }

    #[test]
    fn affinity_zero_at_maxent() {
        let u = state(&[0.25; 4]);
        let model = norm_only_model(4, MetricField::uniform(), 1.0);
        let mask = model.support_of(&u);
        let (_, lambda) = model.affinity_auto(&u, &mask).unwrap();
        assert!(lambda.norm() <= 1e-14, "norm {}", lambda.norm());

        // Gibbs state with {H, I}.
        let e: [f64; 3] = [0.0, 1.0, 2.0];
        let w: Vec<f64> = e.iter().map(|&x| (-1.3 * x).exp()).collect();
        let z: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|&x| x / z).collect();
        let s = state(&p);
        let model = energy_model(&e, &s, MetricField::uniform());
        let mask = model.support_of(&s);
        let (_, lambda) = model.affinity_auto(&s, &mask).unwrap();
        assert!(lambda.norm() <= 1e-10, "norm {}", lambda.norm());
    }

    #[test]
    fn affinity_nonzero_off_maxent() {
        let s = state(&[0.7, 0.2, 0.1]);
        let e = [0.0, 1.0, 2.0];
        let model = energy_model(&e, &s, MetricField::uniform());
        let mask = model.support_of(&s);
        let (_, lambda) = model.affinity_auto(&s, &mask).unwrap();
        assert!(lambda.norm() > 1e-6, "norm {}", lambda.norm());
    }

    #[test]
    fn affinity_image_is_orthogonal_to_psi() {
        let s = state(&[0.45, 0.3, 0.15, 0.1]);
        let e = DVector::from_vec(vec![0.0, 1.0, 2.0, 4.0]);
        for metric in [
            MetricField::uniform(),
            MetricField::diagonal(DVector::from_vec(vec![1.0, 2.0, 0.5, 3.0])).unwrap(),
            MetricField::diagonal_field(crate::metric::DiagonalRule::InverseProbability {
                delta: 1e-9,
            }),
        ] {
            let rows = vec![e.clone()];
            let set = ConstraintSet::for_state(rows, None, &s).unwrap();
            let model = SeaModel::new(set, metric, TauPolicy::Constant(1.0)).unwrap();
            let mask = model.support_of(&s);
            let (_, lambda) = model.affinity_auto(&s, &mask).unwrap();
            let form = model.metric.evaluate(&s).unwrap();
            let ginv_lambda = form.apply_inverse(&lambda).unwrap();
            for row in model.constraints.rows() {
                let psi = crate::state::psi_row(&s, row).unwrap();
                let dot = psi.dot(&ginv_lambda);
                let scale = psi.norm() * ginv_lambda.norm();
                assert!(dot.abs() <= 1e-9 * scale.max(1.0), "dot {dot}");
            }
        }
    }

    #[test]
    fn sea_direction_at_maxent_is_zero() {
        let u = state(&[0.2; 5]);
        let model = norm_only_model(5, MetricField::uniform(), 1.0);
        let mask = model.support_of(&u);
        let sol = model.sea_direction(&u, &mask).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.pi_gamma.norm(), 0.0);
        assert_eq!(sol.entropy_production, 0.0);
        assert!(sol.dod < DOD_UNDERFLOW);
    }

    #[test]
    fn sea_direction_matches_angular_brute_force() {
        // 2-state: the feasible directions are the unit tangents to the
        // normalization circle; pick the entropy-increasing one on a fine
        // angular grid and compare directions.
        let s = state(&[0.9, 0.1]);
        let model = norm_only_model(2, MetricField::uniform(), 1.0);
        let mask = model.support_of(&s);
        let sol = model.sea_direction(&s, &mask).unwrap();

        let phi = crate::state::entropy_gradient_phi(&s, 1.0);
        let gamma_hat = s.gamma() / s.gamma().norm();
        let mut best = (f64::NEG_INFINITY, DVector::zeros(2));
        let steps = 20_000;
        for k in 0..steps {
            let theta = 2.0 * std::f64::consts::PI * (k as f64) / (steps as f64);
            let mut z = DVector::from_vec(vec![theta.cos(), theta.sin()]);
            // project onto the conservation tangent (z ⊥ γ) and normalize
            let along = z.dot(&gamma_hat);
            z.axpy(-along, &gamma_hat, 1.0);
            let n = z.norm();
            if n < 1e-8 {
                continue;
            }
            z /= n;
            let gain = phi.dot(&z);
            if gain > best.0 {
                best = (gain, z);
            }
        }
        let pi_hat = &sol.pi_gamma / sol.pi_gamma.norm();
        let cosine = pi_hat.dot(&best.1).clamp(-1.0, 1.0);
        assert!(cosine.acos() <= 1e-3, "angle {}", cosine.acos());
    }

    #[test]
    fn doubling_tau_halves_direction() {
        let s = state(&[0.8, 0.15, 0.05]);
        let m1 = norm_only_model(3, MetricField::uniform(), 1.0);
        let m2 = norm_only_model(3, MetricField::uniform(), 2.0);
        let mask = m1.support_of(&s);
        let s1 = m1.sea_direction(&s, &mask).unwrap();
        let s2 = m2.sea_direction(&s, &mask).unwrap();
        assert_relative_eq!(s1.beta[0], s2.beta[0], max_relative = 1e-15);
        assert_relative_eq!(
            (&s1.lambda - &s2.lambda).norm(),
            0.0,
            epsilon = 1e-15 * s1.lambda.norm()
        );
        for j in 0..3 {
            assert_relative_eq!(
                s1.pi_gamma[j],
                2.0 * s2.pi_gamma[j],
                max_relative = 1e-14
            );
        }
        assert_relative_eq!(
            s1.entropy_production,
            2.0 * s2.entropy_production,
            max_relative = 1e-14
        );
    }

    #[test]
    fn cramer_single_constraint_hand_expansion() {
        let s = state(&[0.55, 0.25, 0.2]);
        let model = norm_only_model(3, MetricField::uniform(), 0.7);
        let mask = model.support_of(&s);
        let sol = model.sea_direction_cramer(&s, &mask).unwrap();

        // Π_γ ∝ Ĝ⁻¹Φ − (b₁/A₁₁)Ĝ⁻¹Ψ₁ with Ĝ = Î here.
        let phi = crate::state::entropy_gradient_phi(&s, 1.0);
        let psi = crate::state::psi_row(&s, model.constraints.row(0)).unwrap();
        let a11 = psi.dot(&psi);
        let b1 = psi.dot(&phi);
        let expected = (&phi - &psi * (b1 / a11)) / (1.0 * 0.7);
        for j in 0..3 {
            assert_relative_eq!(sol.pi_gamma[j], expected[j], max_relative = 1e-12);
        }
    }

    #[test]
    fn cramer_agrees_with_solve_route() {
        let mut seed = 0xc0ffee123456789u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..25 {
            let n = 2 + (next() * 5.0) as usize; // 2..6
            let c_extra = (next() * 3.0) as usize % 3; // 0..2 extra rows
            let mut p: Vec<f64> = (0..n).map(|_| next() + 0.05).collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= total);
            let s = state(&p);
            let mut rows = Vec::new();
            for i in 0..c_extra.min(n.saturating_sub(1)) {
                rows.push(DVector::from_fn(n, |j, _| {
                    (j as f64 + 1.0).powi(i as i32 + 1) + next()
                }));
            }
            let set = match ConstraintSet::for_state(rows, None, &s) {
                Ok(set) => set,
                Err(_) => continue,
            };
            let metric = match trial % 3 {
                0 => MetricField::uniform(),
                1 => MetricField::diagonal(DVector::from_fn(n, |_, _| next() + 0.5)).unwrap(),
                _ => {
                    let a = DMatrix::from_fn(n, n, |_, _| next() - 0.5);
                    MetricField::dense(a.transpose() * &a + DMatrix::identity(n, n)).unwrap()
                }
            };
            let model = SeaModel::new(set, metric, TauPolicy::Constant(1.0)).unwrap();
            let mask = model.support_of(&s);
            let a = model.sea_direction(&s, &mask).unwrap();
            let b = model.sea_direction_cramer(&s, &mask).unwrap();
            let scale = a.pi_gamma.amax().max(1.0);
            for j in 0..n {
                assert!(
                    (a.pi_gamma[j] - b.pi_gamma[j]).abs() <= 1e-8 * scale,
                    "trial {trial} component {j}: {} vs {}",
                    a.pi_gamma[j],
                    b.pi_gamma[j]
                );
            }
        }
    }

    #[test]
    fn cramer_zero_at_maxent_and_dimension_guard() {
        let u = state(&[0.25; 4]);
        let model = norm_only_model(4, MetricField::uniform(), 1.0);
        let mask = model.support_of(&u);
        let sol = model.sea_direction_cramer(&u, &mask).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.pi_gamma.norm(), 0.0);

        // Vandermonde-style rows are independent: seven constraints exceed
        // the determinant-form guard.
        let n = 10;
        let mut rows: Vec<DVector<f64>> = (1..=6)
            .map(|power| DVector::from_fn(n, |j, _| ((j + 1) as f64 / n as f64).powi(power)))
            .collect();
        rows.push(DVector::from_element(n, 1.0));
        let mut targets: Vec<f64> = vec![0.0; 6];
        let s = state(&vec![0.1; 10]);
        for (i, row) in rows.iter().take(6).enumerate() {
            targets[i] = crate::state::mean_value(&s, row).unwrap();
        }
        targets.push(1.0);
        let set = ConstraintSet::new(rows, targets, None).unwrap();
        let model = SeaModel::new(set, MetricField::uniform(), TauPolicy::Constant(1.0)).unwrap();
        let mask = model.support_of(&s);
        assert!(matches!(
            model.sea_direction_cramer(&s, &mask),
            Err(SeaError::DeterminantFormTooLarge { got: 7, max: 6 })
        ));
    }

    #[test]
    fn degenerate_on_support_is_rejected() {
        // Rows independent globally but identical on the active support.
        let s = SquareRootState::from_gamma(DVector::from_vec(vec![0.8, 0.6, 0.0])).unwrap();
        let rows = vec![
            DVector::from_vec(vec![1.0, 2.0, 9.0]),
            DVector::from_vec(vec![1.0, 2.0, -3.0]),
            DVector::from_element(3, 1.0),
        ];
        let set = ConstraintSet::new(rows, vec![1.52, 1.52, 1.0], None).unwrap();
        let model = SeaModel::new(set, MetricField::uniform(), TauPolicy::Constant(1.0)).unwrap();
        let mask = model.support_of(&s);
        assert!(matches!(
            model.gram_system(&s, &mask),
            Err(SeaError::DegenerateConstraints { .. })
        ));
    }

    #[test]
    fn entropy_production_cases() {
        let s = state(&[0.9, 0.1]);
        let model = norm_only_model(2, MetricField::uniform(), 1.0);
        let mask = model.support_of(&s);
        let sol = model.sea_direction(&s, &mask).unwrap();
        // Ĝ = Î, τ = 1, k_B = 1: Π_S = ‖Λ‖².
        assert_relative_eq!(
            entropy_production(&sol).unwrap(),
            sol.lambda.norm_squared(),
            max_relative = 1e-10
        );

        let u = state(&[0.5, 0.5]);
        let sol = model.sea_direction(&u, &mask).unwrap();
        assert_eq!(entropy_production(&sol).unwrap(), 0.0);
    }

    #[test]
    fn dod_cases() {
        let s = state(&[0.9, 0.1]);
        let uniform = norm_only_model(2, MetricField::uniform(), 1.0);
        let mask = uniform.support_of(&s);
        let (_, lambda) = uniform.affinity_auto(&s, &mask).unwrap();
        let dod_uniform = uniform.degree_of_disequilibrium(&s, &mask).unwrap();
        assert_relative_eq!(dod_uniform, lambda.norm_squared(), max_relative = 1e-12);

        // A scalar metric 2Î leaves the projection (and so Λ) unchanged and
        // divides DoD by 2.
        let scaled = norm_only_model(
            2,
            MetricField::diagonal(DVector::from_vec(vec![2.0, 2.0])).unwrap(),
            1.0,
        );
        let dod_scaled = scaled.degree_of_disequilibrium(&s, &mask).unwrap();
        assert_relative_eq!(dod_scaled, dod_uniform / 2.0, max_relative = 1e-12);

        let u = state(&[0.5, 0.5]);
        assert_eq!(uniform.degree_of_disequilibrium(&u, &mask).unwrap(), 0.0);
    }

    #[test]
    fn resolve_tau_modes() {
        let s = state(&[0.9, 0.1]);
        let constant = norm_only_model(2, MetricField::uniform(), 0.5);
        let mask = constant.support_of(&s);
        assert_eq!(constant.resolve_tau(&s, &mask).unwrap(), 0.5);

        let dod = constant.degree_of_disequilibrium(&s, &mask).unwrap();
        let mut model = constant.clone();
        model.tau_policy = TauPolicy::PrescribedEntropyProduction(1.0);
        assert_relative_eq!(model.resolve_tau(&s, &mask).unwrap(), dod, max_relative = 1e-12);
        // prescribed Π_S is realized at the evaluation state
        let sol = model.sea_direction(&s, &mask).unwrap();
        assert_relative_eq!(sol.entropy_production, 1.0, max_relative = 1e-9);

        model.tau_policy = TauPolicy::PrescribedSpeed(2.0);
        assert_relative_eq!(
            model.resolve_tau(&s, &mask).unwrap(),
            dod.sqrt() / 2.0,
            max_relative = 1e-12
        );
        let sol = model.sea_direction(&s, &mask).unwrap();
        assert_relative_eq!(sol.speed, 2.0, max_relative = 1e-9);

        let u = state(&[0.5, 0.5]);
        assert!(matches!(
            model.resolve_tau(&u, &mask),
            Err(SeaError::TauUndefinedAtEquilibrium)
        ));
    }

    #[test]
    fn prescribed_speed_example() {
        // DoD = 16, prescribed speed 2, k_B = 1 → τ = 2.
        let tau = tau_from_dod(&TauPolicy::PrescribedSpeed(2.0), 16.0, 1.0).unwrap();
        assert_eq!(tau, 2.0);
        let tau = tau_from_dod(&TauPolicy::PrescribedEntropyProduction(1.0), 0.37, 1.0).unwrap();
        assert_relative_eq!(tau, 0.37, max_relative = 1e-15);
    }

    #[test]
    fn adding_psi_combination_to_phi_leaves_direction_invariant() {
        // Shifting Φ by Σ c_i Ψ_i shifts b by A·c, the multipliers absorb it,
        // and Λ (hence Π_γ) is unchanged.
        let s = state(&[0.4, 0.3, 0.2, 0.1]);
        let e = DVector::from_vec(vec![0.0, 1.0, 2.0, 3.0]);
        let set = ConstraintSet::for_state(vec![e], None, &s).unwrap();
        let model = SeaModel::new(set, MetricField::uniform(), TauPolicy::Constant(1.0)).unwrap();
        let mask = model.support_of(&s);
        let (a, b) = model.gram_system(&s, &mask).unwrap();
        let beta = model.solve_multipliers(&a, &b).unwrap();

        let shift = DVector::from_vec(vec![0.8, -1.7]);
        let b_shifted = &b + &a * &shift;
        let beta_shifted = model.solve_multipliers(&a, &b_shifted).unwrap();
        let absorbed = &beta_shifted - &beta;
        for i in 0..2 {
            assert!(
                (model.k_b() * absorbed[i] - shift[i]).abs() <= 1e-9,
                "multiplier {i} absorbed {} of shift {}",
                absorbed[i],
                shift[i]
            );
        }

        // Direct route: Λ' from the shifted Φ equals Λ.
        let phi = crate::state::entropy_gradient_phi(&s, 1.0);
        let psi = crate::state::constraint_gradients_psi(&s, &model.constraints).unwrap();
        let mut phi_shifted = phi.clone();
        for (i, p) in psi.iter().enumerate() {
            phi_shifted.axpy(shift[i], p, 1.0);
        }
        let mut lambda = phi.clone();
        let mut lambda_shifted = phi_shifted;
        for (i, p) in psi.iter().enumerate() {
            lambda.axpy(-beta[i], p, 1.0);
            lambda_shifted.axpy(-beta_shifted[i], p, 1.0);
        }
        assert!((&lambda - &lambda_shifted).amax() <= 1e-9);
    }

    #[test]
    fn conservation_and_h_theorem_on_random_instances() {
        let mut seed = 0x1234_5678_9abc_def0u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..60 {
            let n = 2 + (next() * 31.0) as usize;
            let mut p: Vec<f64> = (0..n).map(|_| next() + 1e-3).collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= total);
            let s = state(&p);
            let extra = ((next() * 3.0) as usize).min(n.saturating_sub(2));
            let rows: Vec<DVector<f64>> = (0..extra)
                .map(|i| DVector::from_fn(n, |j, _| ((i + j) as f64 * 0.73 + next()).sin()))
                .collect();
            let set = match ConstraintSet::for_state(rows, None, &s) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let metric = match trial % 4 {
                0 => MetricField::uniform(),
                1 => MetricField::diagonal(DVector::from_fn(n, |_, _| next() + 0.25)).unwrap(),
                2 => MetricField::diagonal_field(
                    crate::metric::DiagonalRule::InverseProbability { delta: 1e-9 },
                ),
                _ => {
                    let a = DMatrix::from_fn(n, n, |_, _| next() - 0.5);
                    MetricField::dense(a.transpose() * &a + DMatrix::identity(n, n).scale(n as f64))
                        .unwrap()
                }
            };
            let model = SeaModel::new(set, metric, TauPolicy::Constant(1.0)).unwrap();
            let mask = model.support_of(&s);
            let sol = model.sea_direction(&s, &mask).unwrap();
            assert!(sol.entropy_production >= -1e-12);
            for row in model.constraints.rows() {
                let psi = crate::state::psi_row(&s, row).unwrap();
                let dot = psi.dot(&sol.pi_gamma);
                let scale = psi.norm() * sol.pi_gamma.norm();
                assert!(
                    dot.abs() <= 1e-9 * scale.max(1e-30),
                    "trial {trial}: conservation violated, ({dot:e})"
                );
            }
        }
    }

    #[test]
    fn rotated_direction_parallel_to_counter_rotated_affinity() {
        // Ĝ^{1/2}Π_γ must align with Ĝ^{-1/2}Λ; build the square roots from a
        // symmetric eigendecomposition as a test-side oracle.
        let s = state(&[0.4, 0.25, 0.2, 0.15]);
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                3.0, 0.5, 0.2, 0.1, 0.5, 2.0, 0.3, 0.0, 0.2, 0.3, 1.5, 0.2, 0.1, 0.0, 0.2, 2.5,
            ],
        );
        let e = DVector::from_vec(vec![0.0, 1.0, 2.0, 3.0]);
        let set = ConstraintSet::for_state(vec![e], None, &s).unwrap();
        let model = SeaModel::new(
            set,
            MetricField::dense(a.clone()).unwrap(),
            TauPolicy::Constant(1.0),
        )
        .unwrap();
        let mask = model.support_of(&s);
        let sol = model.sea_direction(&s, &mask).unwrap();

        let eigen = a.symmetric_eigen();
        let sqrt_vals = eigen.eigenvalues.map(|v| v.sqrt());
        let g_half = &eigen.eigenvectors
            * DMatrix::from_diagonal(&sqrt_vals)
            * eigen.eigenvectors.transpose();
        let g_half_inv = &eigen.eigenvectors
            * DMatrix::from_diagonal(&sqrt_vals.map(|v| 1.0 / v))
            * eigen.eigenvectors.transpose();
        let u = &g_half * &sol.pi_gamma;
        let v = &g_half_inv * &sol.lambda;
        let cosine = u.dot(&v) / (u.norm() * v.norm());
        assert!(cosine >= 1.0 - 1e-10, "cosine {cosine}");
    }

    #[test]
    fn onsager_conductivity_is_symmetric() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.4, 0.1, 0.4, 1.5, 0.3, 0.1, 0.3, 1.0]);
        let field = MetricField::dense(a).unwrap();
        let s = state(&[0.5, 0.3, 0.2]);
        let form = field.evaluate(&s).unwrap();
        let kbt = 1.0 * 0.8;
        let mut l = DMatrix::zeros(3, 3);
        for k in 0..3 {
            let mut e = DVector::zeros(3);
            e[k] = 1.0;
            let col = form.apply_inverse(&e).unwrap() / kbt;
            l.column_mut(k).copy_from(&col);
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (l[(i, j)] - l[(j, i)]).abs() <= 1e-12 * l.amax(),
                    "L[{i},{j}] asymmetry"
                );
            }
        }
    }

    #[test]
    fn speed_identity_each_evaluation() {
        let s = state(&[0.55, 0.3, 0.15]);
        let e = DVector::from_vec(vec![0.0, 2.0, 5.0]);
        let set = ConstraintSet::for_state(vec![e], None, &s).unwrap();
        let model = SeaModel::new(
            set,
            MetricField::diagonal(DVector::from_vec(vec![1.0, 0.5, 2.0])).unwrap(),
            TauPolicy::Constant(0.3),
        )
        .unwrap()
        .with_k_b(1.7)
        .unwrap();
        let mask = model.support_of(&s);
        let sol = model.sea_direction(&s, &mask).unwrap();
        let kbt = 1.7 * 0.3;
        assert_relative_eq!(
            sol.speed * sol.speed,
            sol.dod / (kbt * kbt),
            max_relative = 1e-10
        );
        assert_relative_eq!(
            sol.speed * sol.speed,
            sol.entropy_production / kbt,
            max_relative = 1e-10
        );
    }

    #[test]
    fn zero_support_components_have_zero_direction() {
        let s = SquareRootState::from_gamma(DVector::from_vec(vec![0.8, 0.0, 0.6])).unwrap();
        let rows = vec![DVector::from_vec(vec![0.0, 1.0, 2.0])];
        let set = ConstraintSet::for_state(rows, None, &s).unwrap();
        // dense metric coupling the zero component to the active ones
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0]);
        let model = SeaModel::new(set, MetricField::dense(g).unwrap(), TauPolicy::Constant(1.0))
            .unwrap();
        let mask = model.support_of(&s);
        let sol = model.sea_direction(&s, &mask).unwrap();
        assert_eq!(sol.pi_gamma[1], 0.0);
        assert_eq!(sol.lambda[1], 0.0);
    }
}
