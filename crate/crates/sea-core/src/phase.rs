//! Reduction of classical phase-space relaxation to the discrete machinery.
//!
//! A (q,p) rectangle is discretized into cells with centers (q_j, p_j) and
//! measure dΩ = Δq·Δp. A density rule f(q,p) turns into cell masses
//! p_j = f(q_j,p_j)·dΩ, normalized to one, so the discrete inner product
//! represents the phase-space integral at midpoint-rule accuracy. The
//! conserved rows are the sampled Hamiltonian H(q,p) = p²/2m + V(q), the
//! momentum coordinate, and unity; the adapter feeds exactly the same types
//! as the discrete framework, with no special-cased dynamics.
//!
//! Only the dissipative relaxation channel is integrated here; symplectic
//! transport of the density is out of scope.

use nalgebra::DVector;

use crate::dynamics::{SeaModel, TauPolicy};
use crate::error::{Result, SeaError};
use crate::integrate::{integrate, IntegratorConfig, TrajectoryRecord};
use crate::metric::MetricField;
use crate::state::{ConstraintSet, SquareRootState};

/// A rectangular position-momentum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_q: usize,
    pub n_p: usize,
}

impl PhaseGrid {
    pub fn new(
        q_min: f64,
        q_max: f64,
        p_min: f64,
        p_max: f64,
        n_q: usize,
        n_p: usize,
    ) -> Result<Self> {
        for (name, v) in [
            ("q_min", q_min),
            ("q_max", q_max),
            ("p_min", p_min),
            ("p_max", p_max),
        ] {
            if !v.is_finite() {
                return Err(SeaError::InvalidConfig {
                    detail: format!("{name} must be finite"),
                });
            }
        }
        if q_max <= q_min || p_max <= p_min {
            return Err(SeaError::InvalidConfig {
                detail: "grid bounds must be ordered: q_min < q_max and p_min < p_max".to_string(),
            });
        }
        if n_q < 2 || n_p < 2 {
            return Err(SeaError::InvalidConfig {
                detail: format!("cell counts must be at least 2, got n_q={n_q}, n_p={n_p}"),
            });
        }
        Ok(Self {
            q_min,
            q_max,
            p_min,
            p_max,
            n_q,
            n_p,
        })
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / self.n_q as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.n_p as f64
    }

    /// Cell measure dΩ = Δq·Δp.
    pub fn cell_measure(&self) -> f64 {
        self.dq() * self.dp()
    }

    pub fn n_cells(&self) -> usize {
        self.n_q * self.n_p
    }

    pub fn q_center(&self, iq: usize) -> f64 {
        self.q_min + (iq as f64 + 0.5) * self.dq()
    }

    pub fn p_center(&self, ip: usize) -> f64 {
        self.p_min + (ip as f64 + 0.5) * self.dp()
    }

    /// Cell centers in flat index order j = iq·n_p + ip.
    pub fn center(&self, j: usize) -> (f64, f64) {
        (self.q_center(j / self.n_p), self.p_center(j % self.n_p))
    }

    pub fn q_centers(&self) -> Vec<f64> {
        (0..self.n_q).map(|i| self.q_center(i)).collect()
    }

    pub fn p_centers(&self) -> Vec<f64> {
        (0..self.n_p).map(|i| self.p_center(i)).collect()
    }
}

/// Potential energy profile V(q).
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Free,
    Harmonic { omega: f64 },
    /// Sampled table with linear interpolation; q strictly increasing.
    Table { q: Vec<f64>, v: Vec<f64> },
}

impl Potential {
    /// Parses two-column numeric text (q, V(q)); `#` starts a comment.
    pub fn from_table_text(text: &str) -> Result<Self> {
        let mut q = Vec::new();
        let mut v = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(SeaError::InvalidConfig {
                    detail: format!(
                        "potential table line {}: expected two columns, found {}",
                        line_no + 1,
                        fields.len()
                    ),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| SeaError::InvalidConfig {
                    detail: format!("potential table line {}: bad number '{s}'", line_no + 1),
                })
            };
            q.push(parse(fields[0])?);
            v.push(parse(fields[1])?);
        }
        if q.len() < 2 {
            return Err(SeaError::InvalidConfig {
                detail: "potential table needs at least two rows".to_string(),
            });
        }
        if q.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SeaError::InvalidConfig {
                detail: "potential table q column must be strictly increasing".to_string(),
            });
        }
        Ok(Potential::Table { q, v })
    }

    /// V(q), with mass-independent units. Table lookups outside the sampled
    /// range are rejected.
    pub fn value(&self, q: f64, omega_mass: f64) -> Result<f64> {
        match self {
            Potential::Free => Ok(0.0),
            Potential::Harmonic { omega } => Ok(0.5 * omega_mass * omega * omega * q * q),
            Potential::Table { q: qs, v } => {
                if q < qs[0] || q > *qs.last().unwrap() {
                    return Err(SeaError::InvalidConfig {
                        detail: format!(
                            "grid center q={q} outside potential table range [{}, {}]",
                            qs[0],
                            qs.last().unwrap()
                        ),
                    });
                }
                let k = match qs.binary_search_by(|x| x.partial_cmp(&q).unwrap()) {
                    Ok(i) => return Ok(v[i]),
                    Err(i) => i - 1,
                };
                let w = (q - qs[k]) / (qs[k + 1] - qs[k]);
                Ok(v[k] * (1.0 - w) + v[k + 1] * w)
            }
        }
    }
}

/// Hamiltonian model H(q,p) = p²/2m + V(q) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModel {
    pub mass: f64,
    pub potential: Potential,
    /// Particle species count. On a single-species grid the particle-number
    /// function coincides with unity, so only 1 is supported.
    pub species: usize,
}

impl PhaseModel {
    pub fn new(mass: f64, potential: Potential) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(SeaError::InvalidConfig {
                detail: format!("mass must be finite and positive, got {mass}"),
            });
        }
        Ok(Self {
            mass,
            potential,
            species: 1,
        })
    }

    pub fn hamiltonian(&self, q: f64, p: f64) -> Result<f64> {
        Ok(p * p / (2.0 * self.mass) + self.potential.value(q, self.mass)?)
    }

    fn validate_species(&self) -> Result<()> {
        if self.species != 1 {
            return Err(SeaError::InvalidConfig {
                detail: format!(
                    "multi-species grids are not supported (species = {}); \
                     particle number on a single-species grid is the unity row",
                    self.species
                ),
            });
        }
        Ok(())
    }
}

/// Discretizes a density rule onto the grid: cell masses p_j = f(q_j,p_j)·dΩ
/// normalized to one, with the conserved rows {H, M (optional), I} sampled
/// at the same centers.
pub fn discretize<F>(
    model: &PhaseModel,
    grid: &PhaseGrid,
    density: F,
    include_momentum: bool,
) -> Result<(SquareRootState, ConstraintSet)>
where
    F: Fn(f64, f64) -> f64,
{
    model.validate_species()?;
    let n = grid.n_cells();
    let d_omega = grid.cell_measure();
    let mut masses = vec![0.0; n];
    let mut energy = DVector::zeros(n);
    let mut momentum = DVector::zeros(n);
    for j in 0..n {
        let (q, p) = grid.center(j);
        let f = density(q, p);
        if !f.is_finite() {
            return Err(SeaError::InvalidDensity {
                detail: format!("density is not finite at (q={q}, p={p})"),
            });
        }
        if f < 0.0 {
            return Err(SeaError::InvalidDensity {
                detail: format!("density is negative at (q={q}, p={p}): {f}"),
            });
        }
        masses[j] = f * d_omega;
        let h = model.hamiltonian(q, p)?;
        if !h.is_finite() {
            return Err(SeaError::InvalidConfig {
                detail: format!("Hamiltonian is not finite at (q={q}, p={p})"),
            });
        }
        energy[j] = h;
        momentum[j] = p;
    }
    let total: f64 = masses.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(SeaError::InvalidDensity {
            detail: format!("total mass {total} is not positive"),
        });
    }
    masses.iter_mut().for_each(|m| *m /= total);

    let state = SquareRootState::from_probabilities(&masses)?;
    let (rows, labels) = if include_momentum {
        (vec![energy, momentum], vec!["H".to_string(), "M".to_string()])
    } else {
        (vec![energy], vec!["H".to_string()])
    };
    let constraints = ConstraintSet::for_state(rows, Some(labels), &state)?;
    Ok((state, constraints))
}

/// Discretizes, then relaxes the grid state under {H, M, I} (or {H, I}) to
/// its constrained equilibrium.
#[allow(clippy::too_many_arguments)]
pub fn relax_phase<F>(
    model: &PhaseModel,
    grid: &PhaseGrid,
    density: F,
    include_momentum: bool,
    metric: MetricField,
    tau_policy: TauPolicy,
    k_b: f64,
    config: &IntegratorConfig,
) -> Result<(TrajectoryRecord, ConstraintSet)>
where
    F: Fn(f64, f64) -> f64,
{
    let (state, constraints) = discretize(model, grid, density, include_momentum)?;
    let sea = SeaModel::new(constraints.clone(), metric, tau_policy)?.with_k_b(k_b)?;
    let record = integrate(&sea, &state, config)?;
    Ok((record, constraints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::TrajectoryStatus;
    use crate::maxent::solve_maxent;
    use crate::state::mean_value;
    use approx::assert_relative_eq;

    fn harmonic_model() -> PhaseModel {
        PhaseModel::new(1.0, Potential::Harmonic { omega: 1.0 }).unwrap()
    }

    fn boltzmann(model: &PhaseModel, t: f64) -> impl Fn(f64, f64) -> f64 + '_ {
        move |q, p| (-model.hamiltonian(q, p).unwrap() / t).exp()
    }

    #[test]
    fn grid_geometry() {
        let grid = PhaseGrid::new(-1.0, 1.0, -2.0, 2.0, 4, 8).unwrap();
        assert_relative_eq!(grid.dq(), 0.5);
        assert_relative_eq!(grid.dp(), 0.5);
        assert_relative_eq!(grid.cell_measure(), 0.25);
        assert_eq!(grid.n_cells(), 32);
        assert_relative_eq!(grid.q_center(0), -0.75);
        assert_relative_eq!(grid.p_center(7), 1.75);
        let (q, p) = grid.center(9);
        assert_relative_eq!(q, -0.25);
        assert_relative_eq!(p, -1.25);
    }

    #[test]
    fn grid_validation() {
        assert!(PhaseGrid::new(1.0, -1.0, -1.0, 1.0, 4, 4).is_err());
        assert!(PhaseGrid::new(-1.0, 1.0, -1.0, 1.0, 1, 4).is_err());
    }

    #[test]
    fn uniform_density_gives_uniform_state() {
        let grid = PhaseGrid::new(-1.0, 1.0, -1.0, 1.0, 3, 3).unwrap();
        let model = harmonic_model();
        let (state, constraints) = discretize(&model, &grid, |_, _| 2.7, true).unwrap();
        for &g in state.gamma().iter() {
            assert_relative_eq!(g * g, 1.0 / 9.0, max_relative = 1e-12);
        }
        assert_eq!(constraints.c(), 3);
        assert_eq!(constraints.labels(), &["H", "M", "I"]);
    }

    #[test]
    fn rejects_bad_densities() {
        let grid = PhaseGrid::new(-1.0, 1.0, -1.0, 1.0, 2, 2).unwrap();
        let model = harmonic_model();
        assert!(matches!(
            discretize(&model, &grid, |q, _| q, true),
            Err(SeaError::InvalidDensity { .. })
        ));
        assert!(matches!(
            discretize(&model, &grid, |_, _| 0.0, true),
            Err(SeaError::InvalidDensity { .. })
        ));
    }

    #[test]
    fn rejects_multi_species() {
        let grid = PhaseGrid::new(-1.0, 1.0, -1.0, 1.0, 2, 2).unwrap();
        let mut model = harmonic_model();
        model.species = 2;
        assert!(matches!(
            discretize(&model, &grid, |_, _| 1.0, true),
            Err(SeaError::InvalidConfig { .. })
        ));
    }

    #[test]
    fn midpoint_canonical_state_is_grid_gibbs() {
        // Center-sampled exp(−H/T) is exactly the discrete Gibbs state, so
        // the affinity vanishes to roundoff under {H, I}.
        let model = harmonic_model();
        let grid = PhaseGrid::new(-5.0, 5.0, -5.0, 5.0, 24, 24).unwrap();
        let (state, constraints) = discretize(&model, &grid, boltzmann(&model, 1.0), false).unwrap();
        let sea = SeaModel::new(constraints, MetricField::uniform(), TauPolicy::Constant(1.0))
            .unwrap();
        let mask = sea.support_of(&state);
        let (_, lambda) = sea.affinity_auto(&state, &mask).unwrap();
        assert!(lambda.norm() <= 1e-10, "affinity norm {}", lambda.norm());
    }

    // Cell-averaged density for separable Gaussians via per-axis
    // Gauss-Legendre quadrature: the best-quadrature discretization of the
    // continuum canonical state, whose affinity exposes the genuine
    // midpoint-vs-average gap.
    pub(super) fn cell_averaged_gaussian(
        grid: &PhaseGrid,
        q0: f64,
        p0: f64,
        sigma_q: f64,
        sigma_p: f64,
    ) -> impl Fn(f64, f64) -> f64 {
        const NODES: [f64; 8] = [
            -0.9602898564975362,
            -0.7966664774136267,
            -0.5255324099163290,
            -0.1834346424956498,
            0.1834346424956498,
            0.5255324099163290,
            0.7966664774136267,
            0.9602898564975362,
        ];
        const WEIGHTS: [f64; 8] = [
            0.1012285362903763,
            0.2223810344533745,
            0.3137066458778873,
            0.3626837833783620,
            0.3626837833783620,
            0.3137066458778873,
            0.2223810344533745,
            0.1012285362903763,
        ];
        let avg_1d = move |center: f64, half: f64, mu: f64, sigma: f64| -> f64 {
            let mut acc = 0.0;
            for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
                let u = (center + half * x - mu) / sigma;
                acc += w * (-0.5 * u * u).exp();
            }
            0.5 * acc
        };
        let (hq, hp) = (grid.dq() / 2.0, grid.dp() / 2.0);
        move |q, p| avg_1d(q, hq, q0, sigma_q) * avg_1d(p, hp, p0, sigma_p)
    }

    #[test]
    fn cell_averaged_canonical_affinity_shrinks_with_refinement() {
        let model = harmonic_model();
        let mut norms = Vec::new();
        for cells in [16usize, 32, 64] {
            let grid = PhaseGrid::new(-5.0, 5.0, -5.0, 5.0, cells, cells).unwrap();
            // T = 1, m = ω = 1: σ_q = σ_p = 1.
            let density = cell_averaged_gaussian(&grid, 0.0, 0.0, 1.0, 1.0);
            let (state, constraints) = discretize(&model, &grid, density, false).unwrap();
            let sea = SeaModel::new(constraints, MetricField::uniform(), TauPolicy::Constant(1.0))
                .unwrap();
            let mask = sea.support_of(&state);
            let (_, lambda) = sea.affinity_auto(&state, &mask).unwrap();
            norms.push(lambda.norm());
        }
        assert!(
            norms[0] > norms[1] && norms[1] > norms[2],
            "affinity norms not shrinking: {norms:?}"
        );
        // midpoint-vs-average gap is second order in the spacing
        assert!(norms[0] / norms[1] > 2.5, "ratios {norms:?}");
    }

    #[test]
    fn energy_mean_converges_to_continuum() {
        // Canonical harmonic ensemble at T = 1 has ⟨H⟩ = 1 (two quadratic
        // degrees of freedom).
        let model = harmonic_model();
        let mut errors = Vec::new();
        for cells in [8usize, 16, 32] {
            let grid = PhaseGrid::new(-7.0, 7.0, -7.0, 7.0, cells, cells).unwrap();
            let (state, constraints) =
                discretize(&model, &grid, boltzmann(&model, 1.0), false).unwrap();
            let mean_h = mean_value(&state, constraints.row(0)).unwrap();
            errors.push((mean_h - 1.0).abs());
        }
        assert!(
            errors[0] > errors[1] && errors[1] > errors[2],
            "errors not shrinking: {errors:?}"
        );
        // first order or better under refinement
        assert!(errors[0] / errors[1] >= 2.0, "{errors:?}");
        assert!(errors[1] / errors[2] >= 2.0, "{errors:?}");
    }

    #[test]
    fn canonical_start_converges_immediately() {
        let model = harmonic_model();
        let grid = PhaseGrid::new(-4.0, 4.0, -4.0, 4.0, 12, 12).unwrap();
        let (record, _) = relax_phase(
            &model,
            &grid,
            boltzmann(&model, 1.0),
            false,
            MetricField::uniform(),
            TauPolicy::Constant(1.0),
            1.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(record.status, TrajectoryStatus::Converged);
        assert_eq!(record.samples.len(), 1);
    }

    #[test]
    fn bimodal_density_relaxes_to_grid_gibbs() {
        let model = harmonic_model();
        let grid = PhaseGrid::new(-4.5, 4.5, -4.5, 4.5, 10, 10).unwrap();
        let bimodal = |q: f64, p: f64| {
            let a = (-((q - 1.2) * (q - 1.2) + p * p) / 0.5).exp();
            let b = (-((q + 1.2) * (q + 1.2) + p * p) / 0.5).exp();
            a + b
        };
        let (record, constraints) = relax_phase(
            &model,
            &grid,
            bimodal,
            false,
            MetricField::uniform(),
            TauPolicy::Constant(1.0),
            1.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(record.status, TrajectoryStatus::Converged);
        let oracle = solve_maxent(&constraints, &record.support).unwrap();
        let p = record.final_sample().state.probabilities();
        let tv: f64 = p
            .iter()
            .zip(oracle.distribution.iter())
            .map(|(&a, &b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 1e-6, "total variation {tv}");
    }

    #[test]
    fn momentum_conserved_in_free_model() {
        // Free Hamiltonian: q is a spectator, momentum stays pinned.
        let model = PhaseModel::new(2.0, Potential::Free).unwrap();
        let grid = PhaseGrid::new(-1.0, 1.0, -4.0, 4.0, 2, 24).unwrap();
        let skewed = |_q: f64, p: f64| (-(p - 0.9) * (p - 0.9) / 0.8).exp() + 0.1 * (-p * p).exp();
        let (record, constraints) = relax_phase(
            &model,
            &grid,
            skewed,
            true,
            MetricField::uniform(),
            TauPolicy::Constant(1.0),
            1.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(record.status, TrajectoryStatus::Converged);
        assert!(record.max_drift() <= 1e-8, "drift {}", record.max_drift());
        let m_index = constraints
            .labels()
            .iter()
            .position(|l| l == "M")
            .unwrap();
        assert!((record.targets[m_index] - record.final_sample().means[m_index]).abs() <= 1e-8);
    }

    #[test]
    fn potential_table_parse_and_interpolate() {
        let text = "# quadratic samples\n-2.0 2.0\n-1.0 0.5\n0.0 0.0\n1.0 0.5\n2.0 2.0\n";
        let table = Potential::from_table_text(text).unwrap();
        assert_relative_eq!(table.value(0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(table.value(0.5, 1.0).unwrap(), 0.25); // linear between 0 and 0.5
        assert!(table.value(3.0, 1.0).is_err());

        assert!(Potential::from_table_text("1.0 2.0\n").is_err());
        assert!(Potential::from_table_text("1.0 2.0\n0.5 1.0\n").is_err());
        assert!(Potential::from_table_text("1.0 2.0 3.0\n2.0 1.0\n").is_err());
    }

    #[test]
    fn table_potential_tracks_builtin_harmonic() {
        // A finely sampled harmonic table must reproduce the builtin to the
        // interpolation error.
        let qs: Vec<f64> = (0..=400).map(|k| -5.0 + k as f64 * 0.025).collect();
        let text: String = qs
            .iter()
            .map(|&q| format!("{q} {}\n", 0.5 * q * q))
            .collect();
        let table = PhaseModel::new(1.0, Potential::from_table_text(&text).unwrap()).unwrap();
        let builtin = harmonic_model();
        let grid = PhaseGrid::new(-3.0, 3.0, -3.0, 3.0, 8, 8).unwrap();
        let (st, ct) = discretize(&table, &grid, boltzmann(&builtin, 1.0), false).unwrap();
        let (sb, cb) = discretize(&builtin, &grid, boltzmann(&builtin, 1.0), false).unwrap();
        assert!((st.gamma() - sb.gamma()).norm() <= 1e-4);
        assert!((ct.row(0) - cb.row(0)).amax() <= 1e-4);
    }
}
