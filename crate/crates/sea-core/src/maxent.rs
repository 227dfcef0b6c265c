//! Independent computation of the constrained maximum-entropy distribution
//! and the relative-entropy diagnostics built on it.
//!
//! On the active support, the entropy maximizer with prescribed means is the
//! exponential family p_j ∝ exp(−Σ_i ν_i C_i,j). The duals ν are found by a
//! safeguarded Newton iteration on the convex log-partition function; the
//! Hessian is the covariance matrix of the constraint values under the
//! current iterate. Used as the endpoint oracle for the relaxation flow and
//! for the disequilibrium comparisons.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::SeaModel;
use crate::error::{Result, SeaError};
use crate::integrate::{integrate, IntegratorConfig, TrajectoryStatus};
use crate::state::{mean_value, ConstraintSet, SquareRootState, SupportMask};

const MAX_ITERATIONS: u32 = 200;
const MEAN_TOLERANCE: f64 = 1e-12;
// Accepted when progress stops within a few digits of the target; beyond
// this the duals are genuinely unresolved.
const STALL_TOLERANCE: f64 = 1e-9;

/// The solved MaxEnt distribution with its dual multipliers.
///
/// `distribution` is full length with zeros off-support; on the support
/// p_j = exp(−Σ_i ν_i C_i,j) with the unity row's multiplier carrying the
/// log-partition value.
#[derive(Debug, Clone)]
pub struct MaxEntResult {
    pub distribution: DVector<f64>,
    pub dual_multipliers: DVector<f64>,
    pub achieved_means: DVector<f64>,
    pub iterations: u32,
    pub residual_norm: f64,
    pub support: SupportMask,
}

/// Solves for the maximum-entropy distribution on `support` matching the
/// constraint targets. Targets must lie strictly inside the convex hull of
/// the constraint-value vectors over the support.
pub fn solve_maxent(constraints: &ConstraintSet, support: &SupportMask) -> Result<MaxEntResult> {
    let c = constraints.c();
    let idx = support.indices();
    let m = idx.len();
    if m == 0 {
        return Err(SeaError::InfeasibleTargets {
            detail: "empty support".to_string(),
        });
    }

    // Reduced problem: all rows except unity, restricted to the support.
    let reduced: Vec<usize> = (0..c).filter(|&i| i != constraints.unity_index()).collect();
    let r = reduced.len();
    let rows: Vec<DVector<f64>> = reduced
        .iter()
        .map(|&i| support.gather(constraints.row(i)))
        .collect();
    let targets = DVector::from_iterator(r, reduced.iter().map(|&i| constraints.targets()[i]));

    feasibility_check(&rows, &targets, constraints, &reduced)?;

    let mut nu = DVector::zeros(r);
    let mut iterations = 0;
    let mut stalled = 0u32;
    let (p, residual) = loop {
        let (p, log_z) = exponential_family(&rows, &nu, m);
        let achieved = DVector::from_iterator(r, rows.iter().map(|row| row.dot(&p)));
        let grad = &targets - &achieved; // ∇ of lnZ(ν) + ν·t
        let residual = (0..r)
            .map(|i| grad[i].abs() / (1.0 + targets[i].abs()))
            .fold(0.0f64, f64::max);
        if residual <= MEAN_TOLERANCE {
            break (p, residual);
        }
        // An ill-conditioned Hessian can pin the attainable residual a few
        // digits above the target; once progress stops, a near-tolerance
        // dual is accepted rather than reported as failure.
        if (stalled >= 3 || iterations >= 50) && residual <= STALL_TOLERANCE {
            log::warn!(
                "dual solve stalled at residual {residual:e} (target {MEAN_TOLERANCE:e})"
            );
            break (p, residual);
        }
        if iterations >= MAX_ITERATIONS || stalled >= 3 {
            return Err(SeaError::DualSolveFailed {
                iterations,
                residual,
            });
        }
        // Newton step on the dual; the covariance Hessian is centered for
        // numerical stability and jittered if the factorization fails.
        let mut hess = DMatrix::zeros(r, r);
        for a in 0..r {
            for b in a..r {
                let cov = (0..m)
                    .map(|j| (rows[a][j] - achieved[a]) * (rows[b][j] - achieved[b]) * p[j])
                    .sum::<f64>();
                hess[(a, b)] = cov;
                hess[(b, a)] = cov;
            }
        }
        let mut jitter = 0.0;
        let delta = loop {
            let mut h = hess.clone();
            for i in 0..r {
                h[(i, i)] += jitter;
            }
            match nalgebra::Cholesky::new(h) {
                Some(chol) => break chol.solve(&grad),
                None => {
                    jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
                    if jitter > 1.0 {
                        return Err(SeaError::DualSolveFailed {
                            iterations,
                            residual,
                        });
                    }
                }
            }
        };
        // Descent direction for f(ν) = lnZ + ν·t is −H⁻¹∇f; our grad is
        // t − achieved = ∇f, so ν moves along −delta.
        let f0 = log_z + nu.dot(&targets);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &nu - &delta * alpha;
            let (_, log_z_trial) = exponential_family(&rows, &trial, m);
            let f_trial = log_z_trial + trial.dot(&targets);
            if f_trial <= f0 - 1e-4 * alpha * grad.dot(&delta) || f_trial < f0 {
                nu = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        stalled = if accepted { 0 } else { stalled + 1 };
        if !accepted {
            // Perturb towards the Newton direction at machine scale so a
            // flat line search can still drift off a plateau.
            nu -= &delta * 1e-14;
        }
        iterations += 1;
    };

    // Full-length distribution and the complete multiplier vector, with the
    // unity multiplier set so p_j = exp(−Σ ν_i C_i,j) exactly.
    let log_z_final = {
        let theta = theta_of(&rows, &nu, m);
        let shift = theta.max();
        shift + theta.iter().map(|&t| (t - shift).exp()).sum::<f64>().ln()
    };
    let mut dual = DVector::zeros(c);
    for (k, &i) in reduced.iter().enumerate() {
        dual[i] = nu[k];
    }
    dual[constraints.unity_index()] = log_z_final;

    let distribution = support.scatter(&p);
    let state = SquareRootState::from_probabilities(distribution.as_slice())?;
    let mut achieved_full = DVector::zeros(c);
    for i in 0..c {
        achieved_full[i] = mean_value(&state, constraints.row(i))?;
    }

    Ok(MaxEntResult {
        distribution,
        dual_multipliers: dual,
        achieved_means: achieved_full,
        iterations,
        residual_norm: residual,
        support: support.clone(),
    })
}

fn theta_of(rows: &[DVector<f64>], nu: &DVector<f64>, m: usize) -> DVector<f64> {
    let mut theta = DVector::zeros(m);
    for (k, row) in rows.iter().enumerate() {
        theta.axpy(-nu[k], row, 1.0);
    }
    theta
}

// Normalized exponential-family distribution and lnZ at the duals, with a
// max-shift so no exponent overflows.
fn exponential_family(rows: &[DVector<f64>], nu: &DVector<f64>, m: usize) -> (DVector<f64>, f64) {
    let theta = theta_of(rows, nu, m);
    let shift = if m > 0 { theta.max() } else { 0.0 };
    let w = theta.map(|t| (t - shift).exp());
    let z: f64 = w.iter().sum();
    (w / z, shift + z.ln())
}

// Pre-check that targets lie strictly inside the convex hull of the
// constraint-value vectors over the support: exact in one dimension, a
// projected-subgradient estimate of the max-min slack in higher dimensions
// (a small linear-program substitute). Dimensions with no spread on the
// support must match their target exactly.
fn feasibility_check(
    rows: &[DVector<f64>],
    targets: &DVector<f64>,
    constraints: &ConstraintSet,
    reduced: &[usize],
) -> Result<()> {
    let r = rows.len();
    if r == 0 {
        return Ok(());
    }
    let m = rows[0].len();
    let mut live = Vec::new();
    for k in 0..r {
        let lo = rows[k].min();
        let hi = rows[k].max();
        let spread = hi - lo;
        let scale = hi.abs().max(lo.abs()).max(1.0);
        let label = &constraints.labels()[reduced[k]];
        if spread <= 1e-14 * scale {
            if (targets[k] - lo).abs() > 1e-10 * scale {
                return Err(SeaError::InfeasibleTargets {
                    detail: format!(
                        "'{label}' is constant ({lo}) on the support but its target is {}",
                        targets[k]
                    ),
                });
            }
        } else {
            let slack = (hi - targets[k]).min(targets[k] - lo) / spread;
            if slack <= 1e-12 {
                return Err(SeaError::InfeasibleTargets {
                    detail: format!(
                        "target {} of '{label}' is on or outside [{lo}, {hi}]",
                        targets[k]
                    ),
                });
            }
            live.push(k);
        }
    }
    if live.len() < 2 {
        return Ok(());
    }

    // Normalize live dimensions by their spread, then minimize over unit
    // directions d the worst-case slack max_j d·(x_j − t).
    let d_dim = live.len();
    let spreads: Vec<f64> = live.iter().map(|&k| rows[k].max() - rows[k].min()).collect();
    let point = |j: usize| -> DVector<f64> {
        DVector::from_iterator(
            d_dim,
            live.iter()
                .enumerate()
                .map(|(a, &k)| (rows[k][j] - targets[k]) / spreads[a]),
        )
    };
    let slack_along = |d: &DVector<f64>| -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for j in 0..m {
            let v = point(j).dot(d);
            if v > best.0 {
                best = (v, j);
            }
        }
        best
    };
    let mut starts: Vec<DVector<f64>> = Vec::new();
    for a in 0..d_dim {
        let mut e = DVector::zeros(d_dim);
        e[a] = 1.0;
        starts.push(e.clone());
        starts.push(-e);
    }
    let mut worst = f64::INFINITY;
    for start in starts {
        let mut d = start;
        for it in 0..300 {
            let (slack, j_star) = slack_along(&d);
            worst = worst.min(slack);
            // subgradient of the max is the active point; project back to
            // the unit sphere after each step
            let step = 0.5 / ((it + 1) as f64).sqrt();
            d.axpy(-step, &point(j_star), 1.0);
            let n = d.norm();
            if n < 1e-12 {
                break;
            }
            d /= n;
        }
    }
    if worst <= 1e-9 {
        return Err(SeaError::InfeasibleTargets {
            detail: format!("hull slack estimate {worst:e} is not strictly positive"),
        });
    }
    Ok(())
}

/// Relative entropy Σ_j p_j ln(p_j/q_j) of a state against a MaxEnt result,
/// with 0·ln(0/q) = 0. The state's support must be contained in the MaxEnt
/// support.
pub fn kl_divergence(state: &SquareRootState, maxent: &MaxEntResult) -> Result<f64> {
    if state.len() != maxent.distribution.len() {
        return Err(SeaError::LengthMismatch {
            expected: maxent.distribution.len(),
            found: state.len(),
        });
    }
    let mut total = 0.0;
    for (j, &g) in state.gamma().iter().enumerate() {
        let p = g * g;
        if p > 0.0 {
            let q = maxent.distribution[j];
            if q <= 0.0 {
                return Err(SeaError::SupportViolation { index: j });
            }
            total += p * (p / q).ln();
        }
    }
    Ok(total)
}

/// The comparison measures at one state: local degree of disequilibrium, the
/// flat-metric affinity norm squared, the total path length to equilibrium,
/// and the relative entropy against the MaxEnt endpoint. Except near
/// equilibrium these generally differ.
#[derive(Debug, Clone)]
pub struct DisequilibriumReport {
    pub dod: f64,
    pub affinity_norm_sq: f64,
    pub d_sea: f64,
    pub kl: f64,
    /// Whether the path-length integration reached the endpoint.
    pub d_sea_complete: bool,
}

/// Evaluates all four disequilibrium measures at `state` under the model's
/// constraints and metric. Targets are read from the state; the path length
/// comes from a fresh relaxation (run at constant τ, which leaves the length
/// invariant).
pub fn disequilibrium_report(model: &SeaModel, state: &SquareRootState) -> Result<DisequilibriumReport> {
    let constraints = model.constraints.retargeted(state)?;
    let mut work = model.clone();
    work.constraints = constraints;
    let mask = work.support_of(state);

    let sol_model = SeaModel::new(
        work.constraints.clone(),
        work.metric.clone(),
        crate::dynamics::TauPolicy::Constant(1.0),
    )?
    .with_k_b(work.k_b())?;
    let sol = sol_model.sea_direction(state, &mask)?;
    let dod = sol.dod;
    let affinity_norm_sq = sol.lambda.norm_squared();

    let record = integrate(&sol_model, state, &IntegratorConfig::default())?;
    let d_sea_complete = matches!(record.status, TrajectoryStatus::Converged);
    let d_sea = record.path_length().length;

    let oracle = solve_maxent(&sol_model.constraints, &mask)?;
    let kl = kl_divergence(state, &oracle)?;

    Ok(DisequilibriumReport {
        dod,
        affinity_norm_sq,
        d_sea,
        kl,
        d_sea_complete,
    })
}
