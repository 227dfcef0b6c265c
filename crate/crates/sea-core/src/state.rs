//! Square-root probability states, conserved-property functionals, and the
//! entropy functional with its gradient vectors.
//!
//! A distribution p over n events is stored through the vector γ with
//! γ_j = √p_j, so nonnegativity of p = γ² survives any evolution of γ.
//! With the flat inner product (a|b) = Σ_j a_j b_j, mean values and the
//! entropy become half inner products against gradient vectors:
//!
//! ```text
//! ⟨C⟩ = Σ_j γ_j² C_j = ½ (Ψ|γ)       Ψ = 2 γ∘C
//! S   = −k_B Σ_j γ_j² ln γ_j² = ½ (Φ|γ)    Φ = −2 k_B γ∘ln γ²
//! ```
//!
//! Components with γ_j = 0 carry the limit values Φ_j = Ψ_j = 0 and are
//! fixed points of the dissipative dynamics; [`SupportMask`] tracks the
//! active components.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SeaError};

/// Components with γ_j at or below this threshold are treated as off-support.
pub const DEFAULT_SUPPORT_EPSILON: f64 = 1e-14;

/// The dynamical state: the vector γ of square roots of probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareRootState {
    gamma: DVector<f64>,
}

impl SquareRootState {
    /// Builds γ_j = √p_j. Rejects negative or non-finite entries, with the
    /// offending index. Does not normalize: γ_j² recovers p_j exactly.
    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        for (index, &value) in p.iter().enumerate() {
            if !value.is_finite() {
                return Err(SeaError::NonFiniteEntry { index });
            }
            if value < 0.0 {
                return Err(SeaError::NegativeEntry { index, value });
            }
        }
        Ok(Self {
            gamma: DVector::from_iterator(p.len(), p.iter().map(|&v| v.sqrt())),
        })
    }

    /// Wraps a γ vector directly. Entries must be finite and nonnegative.
    pub fn from_gamma(gamma: DVector<f64>) -> Result<Self> {
        for (index, &value) in gamma.iter().enumerate() {
            if !value.is_finite() {
                return Err(SeaError::NonFiniteEntry { index });
            }
            if value < 0.0 {
                return Err(SeaError::NegativeEntry { index, value });
            }
        }
        Ok(Self { gamma })
    }

    /// Internal constructor for integrator stage values, which may carry
    /// roundoff-scale negative components near the boundary.
    pub(crate) fn from_gamma_unchecked(gamma: DVector<f64>) -> Self {
        Self { gamma }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    /// p_j = γ_j².
    pub fn probabilities(&self) -> DVector<f64> {
        self.gamma.map(|g| g * g)
    }

    /// Active components: γ_j > epsilon.
    pub fn support_mask(&self, epsilon: f64) -> SupportMask {
        SupportMask::of_state(self, epsilon)
    }
}

/// The set of active (strictly positive) components of a state. Off-support
/// components are fixed points of the dynamics and are excluded from the
/// multiplier solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMask {
    active: Vec<bool>,
    indices: Vec<usize>,
}

impl SupportMask {
    pub fn of_state(state: &SquareRootState, epsilon: f64) -> Self {
        let active: Vec<bool> = state.gamma().iter().map(|&g| g > epsilon).collect();
        let indices = active
            .iter()
            .enumerate()
            .filter_map(|(j, &a)| a.then_some(j))
            .collect();
        Self { active, indices }
    }

    pub fn full(n: usize) -> Self {
        Self {
            active: vec![true; n],
            indices: (0..n).collect(),
        }
    }

    /// Full state length, including inactive components.
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.indices.len()
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.active[j]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Restricts a full-length vector to the active components.
    pub fn gather(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&j| v[j]))
    }

    /// Embeds a masked vector back into full length, zero off-support.
    pub fn scatter(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.active.len());
        for (m, &j) in self.indices.iter().enumerate() {
            out[j] = v[m];
        }
        out
    }

    /// Permanently removes a component from the support.
    pub(crate) fn deactivate(&mut self, j: usize) {
        if self.active[j] {
            self.active[j] = false;
            self.indices.retain(|&k| k != j);
        }
    }
}

/// Conserved-property vectors C_i, always including the unity row I, together
/// with their target mean values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    rows: Vec<DVector<f64>>,
    targets: Vec<f64>,
    labels: Vec<String>,
    unity_index: usize,
}

impl ConstraintSet {
    /// Builds a constraint set from explicit rows and targets. Exactly one row
    /// must equal the all-ones vector, the rows must be linearly independent,
    /// and the unity target must be 1.
    pub fn new(
        rows: Vec<DVector<f64>>,
        targets: Vec<f64>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(SeaError::UnityRowCount { found: 0 });
        }
        let n = rows[0].len();
        for row in &rows {
            if row.len() != n {
                return Err(SeaError::LengthMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (index, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(SeaError::NonFiniteEntry { index });
                }
            }
        }
        if targets.len() != rows.len() {
            return Err(SeaError::LengthMismatch {
                expected: rows.len(),
                found: targets.len(),
            });
        }
        let unity_rows: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.iter().all(|&v| v == 1.0).then_some(i))
            .collect();
        if unity_rows.len() != 1 {
            return Err(SeaError::UnityRowCount {
                found: unity_rows.len(),
            });
        }
        let unity_index = unity_rows[0];
        if (targets[unity_index] - 1.0).abs() > 1e-9 {
            return Err(SeaError::UnityTarget {
                value: targets[unity_index],
            });
        }
        let labels = match labels {
            Some(l) => {
                if l.len() != rows.len() {
                    return Err(SeaError::LengthMismatch {
                        expected: rows.len(),
                        found: l.len(),
                    });
                }
                l
            }
            None => (0..rows.len())
                .map(|i| {
                    if i == unity_index {
                        "I".to_string()
                    } else {
                        format!("C{i}")
                    }
                })
                .collect(),
        };
        let set = Self {
            rows,
            targets,
            labels,
            unity_index,
        };
        set.check_independence()?;
        Ok(set)
    }

    /// Appends the unity row to the given rows and reads every target from the
    /// state: target_i = ⟨C_i⟩ at `state`. The state must be normalized.
    pub fn for_state(
        rows: Vec<DVector<f64>>,
        labels: Option<Vec<String>>,
        state: &SquareRootState,
    ) -> Result<Self> {
        let n = state.len();
        let mut all_rows = rows;
        all_rows.push(DVector::from_element(n, 1.0));
        let mut all_labels = match labels {
            Some(l) => {
                if l.len() + 1 != all_rows.len() {
                    return Err(SeaError::LengthMismatch {
                        expected: all_rows.len() - 1,
                        found: l.len(),
                    });
                }
                l
            }
            None => (0..all_rows.len() - 1).map(|i| format!("C{i}")).collect(),
        };
        all_labels.push("I".to_string());
        let targets: Vec<f64> = all_rows
            .iter()
            .map(|row| mean_value(state, row))
            .collect::<Result<_>>()?;
        let unity_target = targets[all_rows.len() - 1];
        if (unity_target - 1.0).abs() > 1e-6 {
            return Err(SeaError::UnityTarget {
                value: unity_target,
            });
        }
        Self::new(all_rows, targets, Some(all_labels))
    }

    pub fn c(&self) -> usize {
        self.rows.len()
    }

    /// Event count n.
    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &DVector<f64> {
        &self.rows[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn unity_index(&self) -> usize {
        self.unity_index
    }

    /// Current mean value of every constraint at `state`.
    pub fn means(&self, state: &SquareRootState) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.c());
        for (i, row) in self.rows.iter().enumerate() {
            out[i] = mean_value(state, row)?;
        }
        Ok(out)
    }

    /// Same rows with targets re-read from `state`.
    pub fn retargeted(&self, state: &SquareRootState) -> Result<Self> {
        let targets = self.means(state)?;
        let unity_target = targets[self.unity_index];
        if (unity_target - 1.0).abs() > 1e-6 {
            return Err(SeaError::UnityTarget {
                value: unity_target,
            });
        }
        Ok(Self {
            rows: self.rows.clone(),
            targets: targets.iter().copied().collect(),
            labels: self.labels.clone(),
            unity_index: self.unity_index,
        })
    }

    // Rank check via singular values of the c×n row matrix.
    fn check_independence(&self) -> Result<()> {
        let c = self.c();
        if c == 1 {
            return Ok(());
        }
        let n = self.n();
        let mut m = DMatrix::zeros(c, n);
        for (i, row) in self.rows.iter().enumerate() {
            // Scale each row to unit max-norm so the rank test is insensitive
            // to the physical units of the observables.
            let scale = row.amax().max(f64::MIN_POSITIVE);
            for j in 0..n {
                m[(i, j)] = row[j] / scale;
            }
        }
        let svd = m.svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= 1e-12 * smax {
            let detail = self.dependence_detail();
            return Err(SeaError::DependentConstraints { detail });
        }
        Ok(())
    }

    // Names the rows involved when the rank test fails: exact duplicates are
    // reported as a pair, otherwise the whole label list is reported.
    fn dependence_detail(&self) -> String {
        for i in 0..self.c() {
            for k in (i + 1)..self.c() {
                let a = &self.rows[i];
                let b = &self.rows[k];
                let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
                if (a - b).amax() <= 1e-14 * scale {
                    return format!(
                        "rows '{}' and '{}' are identical",
                        self.labels[i], self.labels[k]
                    );
                }
            }
        }
        format!("rows {:?} are linearly dependent", self.labels)
    }
}

/// Entropy gradient Φ and constraint gradients Ψ_i at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVectors {
    /// Φ_j = −2 k_B γ_j ln γ_j², with the limit value 0 where γ_j = 0.
    pub phi: DVector<f64>,
    /// Ψ_i = 2 γ∘C_i, one vector per constraint.
    pub psi: Vec<DVector<f64>>,
}

/// Flat inner product (a|b) = Σ_j a_j b_j.
pub fn inner_product(a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SeaError::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.dot(b))
}

/// Mean value ⟨C⟩ = Σ_j γ_j² C_j.
pub fn mean_value(state: &SquareRootState, c: &DVector<f64>) -> Result<f64> {
    if state.len() != c.len() {
        return Err(SeaError::LengthMismatch {
            expected: state.len(),
            found: c.len(),
        });
    }
    Ok(state
        .gamma()
        .iter()
        .zip(c.iter())
        .map(|(&g, &cj)| g * g * cj)
        .sum())
}

/// Entropy S = −k_B Σ_j p_j ln p_j with the convention 0·ln 0 = 0.
pub fn entropy(state: &SquareRootState, k_b: f64) -> f64 {
    let s: f64 = state
        .gamma()
        .iter()
        .map(|&g| {
            let p = g * g;
            if p > 0.0 {
                p * p.ln()
            } else {
                0.0
            }
        })
        .sum();
    -k_b * s
}

/// Φ_j = −2 k_B γ_j ln γ_j² for γ_j > 0, and the limit value 0 at γ_j = 0.
pub fn entropy_gradient_phi(state: &SquareRootState, k_b: f64) -> DVector<f64> {
    state.gamma().map(|g| phi_component(g, k_b))
}

#[inline]
pub(crate) fn phi_component(gamma: f64, k_b: f64) -> f64 {
    let p = gamma * gamma;
    if p > 0.0 {
        -2.0 * k_b * gamma * p.ln()
    } else {
        0.0
    }
}

/// Ψ_i,j = 2 γ_j C_i,j for a single constraint row.
pub fn psi_row(state: &SquareRootState, c: &DVector<f64>) -> Result<DVector<f64>> {
    if state.len() != c.len() {
        return Err(SeaError::LengthMismatch {
            expected: state.len(),
            found: c.len(),
        });
    }
    Ok(DVector::from_iterator(
        state.len(),
        state
            .gamma()
            .iter()
            .zip(c.iter())
            .map(|(&g, &cj)| 2.0 * g * cj),
    ))
}

/// All constraint gradients Ψ_i = 2 γ∘C_i.
pub fn constraint_gradients_psi(
    state: &SquareRootState,
    constraints: &ConstraintSet,
) -> Result<Vec<DVector<f64>>> {
    constraints
        .rows()
        .iter()
        .map(|row| psi_row(state, row))
        .collect()
}

/// Φ and all Ψ_i in one bundle.
pub fn gradient_vectors(
    state: &SquareRootState,
    constraints: &ConstraintSet,
    k_b: f64,
) -> Result<GradientVectors> {
    Ok(GradientVectors {
        phi: entropy_gradient_phi(state, k_b),
        psi: constraint_gradients_psi(state, constraints)?,
    })
}
