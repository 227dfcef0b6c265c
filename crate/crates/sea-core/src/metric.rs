//! The metric tensor field Ĝ(γ) on square-root probability space and the
//! linear-solve primitives Ĝ⁻¹v used by the steepest-ascent construction.
//!
//! Ĝ must evaluate to a real, symmetric, positive-definite bilinear form at
//! every state. Four kinds are supported: the uniform (Fisher-Rao) metric
//! Ĝ = Î, fixed diagonal weights, a state-dependent diagonal rule, and a
//! fixed dense SPD matrix. State-independent kinds validate and factor once
//! at construction; state-dependent weights are evaluated fresh per state.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, SeaError};
use crate::state::{SquareRootState, SupportMask};

/// Condition-estimate guard: beyond this, multiplier solves are numerically
/// meaningless at double precision and the form is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Named state-dependent diagonal weight rules.
#[derive(Debug, Clone, PartialEq)]
pub enum DiagonalRule {
    /// w_j(γ) = 1 / (γ_j² + delta): a resistivity-like weight that grows
    /// where probability is small.
    InverseProbability { delta: f64 },
}

impl DiagonalRule {
    pub fn weights(&self, state: &SquareRootState) -> DVector<f64> {
        match self {
            DiagonalRule::InverseProbability { delta } => {
                state.gamma().map(|g| 1.0 / (g * g + delta))
            }
        }
    }
}

/// A fixed dense SPD metric, validated and factored at construction.
#[derive(Debug, Clone)]
pub struct DenseMetric {
    matrix: DMatrix<f64>,
    chol: Arc<Cholesky<f64, Dyn>>,
    cond: f64,
    spectral_max: f64,
}

impl DenseMetric {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(SeaError::LengthMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let n = matrix.nrows();
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                let skew = (matrix[(i, j)] - matrix[(j, i)]).abs();
                if skew > 1e-12 * scale {
                    return Err(SeaError::NotSymmetric { i, j, skew });
                }
            }
        }
        let chol = Cholesky::new(matrix.clone()).ok_or_else(|| SeaError::NotPositiveDefinite {
            detail: "Cholesky factorization failed".to_string(),
        })?;
        let eigen = matrix.clone().symmetric_eigen();
        let emax = eigen.eigenvalues.max();
        let emin = eigen.eigenvalues.min();
        if emin <= 0.0 {
            return Err(SeaError::NotPositiveDefinite {
                detail: format!("smallest eigenvalue {emin:e} is not positive"),
            });
        }
        Ok(Self {
            matrix,
            chol: Arc::new(chol),
            cond: emax / emin,
            spectral_max: emax,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// The metric tensor field: a rule producing an SPD form at any state.
#[derive(Debug, Clone)]
pub enum MetricField {
    /// Fisher-Rao: Ĝ = Î.
    Uniform,
    /// Fixed strictly positive diagonal weights.
    Diagonal(DVector<f64>),
    /// State-dependent diagonal weights.
    DiagonalField(DiagonalRule),
    /// Fixed dense SPD matrix.
    Dense(DenseMetric),
}

impl MetricField {
    pub fn uniform() -> Self {
        MetricField::Uniform
    }

    pub fn diagonal(weights: DVector<f64>) -> Result<Self> {
        validate_weights(&weights)?;
        Ok(MetricField::Diagonal(weights))
    }

    pub fn diagonal_field(rule: DiagonalRule) -> Self {
        MetricField::DiagonalField(rule)
    }

    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        Ok(MetricField::Dense(DenseMetric::new(matrix)?))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            MetricField::Uniform => "uniform",
            MetricField::Diagonal(_) => "diagonal",
            MetricField::DiagonalField(_) => "diagonal_field",
            MetricField::Dense(_) => "dense",
        }
    }

    /// Concrete SPD form at `state`, on the full component space.
    pub fn evaluate(&self, state: &SquareRootState) -> Result<MetricForm> {
        self.evaluate_masked(state, &SupportMask::full(state.len()))
    }

    /// Concrete SPD form restricted to the active components of `mask`.
    ///
    /// For diagonal kinds the restriction gathers the weights; for the dense
    /// kind it factors the principal submatrix (the bilinear form a tangent
    /// vector supported on the mask actually sees).
    pub fn evaluate_masked(&self, state: &SquareRootState, mask: &SupportMask) -> Result<MetricForm> {
        let n = state.len();
        let m = mask.active_count();
        match self {
            MetricField::Uniform => Ok(MetricForm::Identity { n: m }),
            MetricField::Diagonal(w) => {
                if w.len() != n {
                    return Err(SeaError::LengthMismatch {
                        expected: n,
                        found: w.len(),
                    });
                }
                Ok(MetricForm::Diagonal(mask.gather(w)))
            }
            MetricField::DiagonalField(rule) => {
                let w = rule.weights(state);
                validate_weights(&w)?;
                Ok(MetricForm::Diagonal(mask.gather(&w)))
            }
            MetricField::Dense(dense) => {
                if dense.matrix.nrows() != n {
                    return Err(SeaError::LengthMismatch {
                        expected: n,
                        found: dense.matrix.nrows(),
                    });
                }
                if m == n {
                    return Ok(MetricForm::Dense {
                        matrix: Arc::new(dense.matrix.clone()),
                        chol: Arc::clone(&dense.chol),
                        cond: dense.cond,
                        spectral_max: dense.spectral_max,
                    });
                }
                let idx = mask.indices();
                let mut sub = DMatrix::zeros(m, m);
                for (a, &i) in idx.iter().enumerate() {
                    for (b, &j) in idx.iter().enumerate() {
                        sub[(a, b)] = dense.matrix[(i, j)];
                    }
                }
                let chol =
                    Cholesky::new(sub.clone()).ok_or_else(|| SeaError::NotPositiveDefinite {
                        detail: "Cholesky of masked submatrix failed".to_string(),
                    })?;
                let eigen = sub.clone().symmetric_eigen();
                let emax = eigen.eigenvalues.max();
                let emin = eigen.eigenvalues.min().max(f64::MIN_POSITIVE);
                Ok(MetricForm::Dense {
                    matrix: Arc::new(sub),
                    chol: Arc::new(chol),
                    cond: emax / emin,
                    spectral_max: emax,
                })
            }
        }
    }
}

fn validate_weights(w: &DVector<f64>) -> Result<()> {
    for (index, &value) in w.iter().enumerate() {
        if !value.is_finite() {
            return Err(SeaError::NonFiniteEntry { index });
        }
        if value <= 0.0 {
            return Err(SeaError::NonPositiveWeight { index, value });
        }
    }
    Ok(())
}

/// A concrete SPD bilinear form at one state, immutable once built.
#[derive(Debug, Clone)]
pub enum MetricForm {
    Identity {
        n: usize,
    },
    Diagonal(DVector<f64>),
    Dense {
        matrix: Arc<DMatrix<f64>>,
        chol: Arc<Cholesky<f64, Dyn>>,
        cond: f64,
        spectral_max: f64,
    },
}

impl MetricForm {
    pub fn dim(&self) -> usize {
        match self {
            MetricForm::Identity { n } => *n,
            MetricForm::Diagonal(w) => w.len(),
            MetricForm::Dense { matrix, .. } => matrix.nrows(),
        }
    }

    pub fn condition_estimate(&self) -> f64 {
        match self {
            MetricForm::Identity { .. } => 1.0,
            MetricForm::Diagonal(w) => w.max() / w.min(),
            MetricForm::Dense { cond, .. } => *cond,
        }
    }

    /// Largest eigenvalue of the form (the spectral norm ‖Ĝ‖).
    pub fn spectral_max(&self) -> f64 {
        match self {
            MetricForm::Identity { .. } => 1.0,
            MetricForm::Diagonal(w) => w.max(),
            MetricForm::Dense { spectral_max, .. } => *spectral_max,
        }
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(SeaError::LengthMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Forward multiply Ĝ v.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v)?;
        Ok(match self {
            MetricForm::Identity { .. } => v.clone(),
            MetricForm::Diagonal(w) => v.component_mul(w),
            MetricForm::Dense { matrix, .. } => matrix.as_ref() * v,
        })
    }

    /// Solves Ĝ x = v. Rejects forms with condition estimate beyond
    /// [`CONDITION_LIMIT`]. Dense solves take one iterative-refinement pass
    /// to hold the residual near machine level.
    pub fn apply_inverse(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v)?;
        let cond = self.condition_estimate();
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(SeaError::IllConditioned {
                cond,
                limit: CONDITION_LIMIT,
            });
        }
        Ok(match self {
            MetricForm::Identity { .. } => v.clone(),
            MetricForm::Diagonal(w) => v.component_div(w),
            MetricForm::Dense { matrix, chol, .. } => {
                let mut x = chol.solve(v);
                let r = v - matrix.as_ref() * &x;
                x += chol.solve(&r);
                x
            }
        })
    }

    /// √(vᵀ Ĝ v): the metric length of a tangent vector. Zero iff v = 0.
    pub fn g_norm(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_len(v)?;
        let q = match self {
            MetricForm::Identity { .. } => v.dot(v),
            MetricForm::Diagonal(w) => v
                .iter()
                .zip(w.iter())
                .map(|(&x, &wj)| wj * x * x)
                .sum::<f64>(),
            MetricForm::Dense { matrix, .. } => v.dot(&(matrix.as_ref() * v)),
        };
        Ok(q.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn any_state(n: usize) -> SquareRootState {
        SquareRootState::from_probabilities(&vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn uniform_is_plain_euclidean() {
        let s = any_state(3);
        let form = MetricField::uniform().evaluate(&s).unwrap();
        let v = DVector::from_vec(vec![3.0, -1.0, 4.0]);
        assert_eq!(form.apply(&v).unwrap(), v);
        assert_eq!(form.apply_inverse(&v).unwrap(), v);
        assert_eq!(form.g_norm(&v).unwrap(), v.norm());
        let w = DVector::from_vec(vec![3.0, 4.0, 0.0]);
        assert_eq!(form.g_norm(&w).unwrap(), 5.0);
    }

    #[test]
    fn diagonal_form_cases() {
        let s = any_state(2);
        let field = MetricField::diagonal(DVector::from_vec(vec![2.0, 3.0])).unwrap();
        let form = field.evaluate(&s).unwrap();
        let v = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(form.apply(&v).unwrap().as_slice(), &[2.0, 3.0]);

        let field = MetricField::diagonal(DVector::from_vec(vec![2.0, 4.0])).unwrap();
        let form = field.evaluate(&s).unwrap();
        let x = form
            .apply_inverse(&DVector::from_vec(vec![2.0, 4.0]))
            .unwrap();
        assert_eq!(x.as_slice(), &[1.0, 1.0]);

        let field = MetricField::diagonal(DVector::from_vec(vec![4.0, 9.0])).unwrap();
        let form = field.evaluate(&s).unwrap();
        assert_relative_eq!(
            form.g_norm(&v).unwrap(),
            13.0f64.sqrt(),
            max_relative = 1e-15
        );
        assert_eq!(form.g_norm(&DVector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_rejects_nonpositive_weights() {
        match MetricField::diagonal(DVector::from_vec(vec![1.0, 0.0])) {
            Err(SeaError::NonPositiveWeight { index: 1, .. }) => {}
            other => panic!("expected NonPositiveWeight at 1, got {other:?}"),
        }
    }

    #[test]
    fn dense_validation() {
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let field = MetricField::dense(ok).unwrap();
        let s = any_state(2);
        let form = field.evaluate(&s).unwrap();
        // eigenvalues 1 and 3
        assert_relative_eq!(form.condition_estimate(), 3.0, max_relative = 1e-12);
        assert_relative_eq!(form.spectral_max(), 3.0, max_relative = 1e-12);
        let x = form
            .apply_inverse(&DVector::from_vec(vec![3.0, 3.0]))
            .unwrap();
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-13);
        assert_relative_eq!(x[1], 1.0, max_relative = 1e-13);

        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        assert!(matches!(
            MetricField::dense(asym),
            Err(SeaError::NotSymmetric { .. })
        ));

        // symmetric but indefinite: eigenvalues 3 and -1
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            MetricField::dense(indef),
            Err(SeaError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn condition_guard_rejects_solve() {
        let s = any_state(2);
        let field = MetricField::diagonal(DVector::from_vec(vec![1.0, 1e13])).unwrap();
        let form = field.evaluate(&s).unwrap();
        assert!(matches!(
            form.apply_inverse(&DVector::from_vec(vec![1.0, 1.0])),
            Err(SeaError::IllConditioned { .. })
        ));
    }

    #[test]
    fn diagonal_field_rule_tracks_state() {
        let rule = DiagonalRule::InverseProbability { delta: 1e-9 };
        let field = MetricField::diagonal_field(rule);
        let s = SquareRootState::from_probabilities(&[0.9, 0.1]).unwrap();
        let form = field.evaluate(&s).unwrap();
        match &form {
            MetricForm::Diagonal(w) => {
                assert_relative_eq!(w[0], 1.0 / (0.9 + 1e-9), max_relative = 1e-12);
                assert_relative_eq!(w[1], 1.0 / (0.1 + 1e-9), max_relative = 1e-12);
            }
            other => panic!("expected diagonal form, got {other:?}"),
        }
    }

    #[test]
    fn masked_dense_uses_principal_submatrix() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[4.0, 1.0, 0.5, 1.0, 3.0, 0.25, 0.5, 0.25, 2.0],
        );
        let field = MetricField::dense(m.clone()).unwrap();
        let s = SquareRootState::from_gamma(DVector::from_vec(vec![0.6, 0.0, 0.8])).unwrap();
        let mask = s.support_mask(crate::state::DEFAULT_SUPPORT_EPSILON);
        let form = field.evaluate_masked(&s, &mask).unwrap();
        assert_eq!(form.dim(), 2);
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let gv = form.apply(&v).unwrap();
        // rows/cols {0,2} of the full matrix
        assert_relative_eq!(gv[0], 4.0 * 1.0 + 0.5 * 2.0, max_relative = 1e-14);
        assert_relative_eq!(gv[1], 0.5 * 1.0 + 2.0 * 2.0, max_relative = 1e-14);
    }

    #[test]
    fn inverse_of_forward_is_identity_on_random_spd() {
        // Deterministic xorshift so failures reproduce.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in [2usize, 5, 17, 64] {
            let a = DMatrix::from_fn(n, n, |_, _| next() - 0.5);
            // Well-conditioned SPD: AᵀA shifted by n·I keeps eigenvalues ≥ n.
            let spd = a.transpose() * &a + DMatrix::identity(n, n).scale(n as f64);
            let field = MetricField::dense(spd).unwrap();
            let s = any_state(n);
            let form = field.evaluate(&s).unwrap();
            let v = DVector::from_fn(n, |_, _| next() - 0.5);
            let gv = form.apply(&v).unwrap();
            let back = form.apply_inverse(&gv).unwrap();
            let err = (&back - &v).norm() / v.norm();
            assert!(err <= 1e-10, "n={n}: relative error {err}");
        }
    }

    #[test]
    fn solve_residual_is_small() {
        let mut seed = 0x853c49e6748fea9bu64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in [3usize, 8, 32] {
            let a = DMatrix::from_fn(n, n, |_, _| next() - 0.5);
            let spd = a.transpose() * &a + DMatrix::identity(n, n).scale(0.5);
            let field = MetricField::dense(spd.clone()).unwrap();
            let form = field.evaluate(&any_state(n)).unwrap();
            let v = DVector::from_fn(n, |_, _| next() - 0.5);
            let x = form.apply_inverse(&v).unwrap();
            let res = (&spd * &x - &v).norm();
            assert!(res <= 1e-10 * v.norm(), "n={n}: residual {res}");
        }
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // g_norm derives from an inner product, so the parallelogram law holds.
        #[test]
        fn parallelogram_law(
            raw in prop::collection::vec(0.1..2.0f64, 2..12),
            ux in prop::collection::vec(-1.0..1.0f64, 2..12),
            vx in prop::collection::vec(-1.0..1.0f64, 2..12),
        ) {
            let n = raw.len().min(ux.len()).min(vx.len());
            let field = MetricField::diagonal(DVector::from_iterator(n, raw[..n].iter().copied())).unwrap();
            let s = SquareRootState::from_probabilities(&vec![1.0 / n as f64; n]).unwrap();
            let form = field.evaluate(&s).unwrap();
            let u = DVector::from_iterator(n, ux[..n].iter().copied());
            let v = DVector::from_iterator(n, vx[..n].iter().copied());
            let lhs = form.g_norm(&(&u + &v)).unwrap().powi(2)
                + form.g_norm(&(&u - &v)).unwrap().powi(2);
            let rhs = 2.0 * form.g_norm(&u).unwrap().powi(2)
                + 2.0 * form.g_norm(&v).unwrap().powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
        }
    }
}
