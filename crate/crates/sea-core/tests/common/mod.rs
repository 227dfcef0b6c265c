//! Shared generators for the integration and acceptance suites: seeded
//! random states, independent constraint sets, and all four metric kinds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sea_core::{
    ConstraintSet, DiagonalRule, MetricField, SeaModel, SquareRootState, TauPolicy,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> SquareRootState {
    let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..1.0)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    SquareRootState::from_probabilities(&p).expect("positive probabilities")
}

/// `extra` independent rows in addition to the unity row, targets read from
/// the state. Retries until the rank check passes.
pub fn random_constraints(
    rng: &mut ChaCha8Rng,
    state: &SquareRootState,
    extra: usize,
) -> ConstraintSet {
    let n = state.len();
    loop {
        let rows: Vec<DVector<f64>> = (0..extra)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        if let Ok(set) = ConstraintSet::for_state(rows, None, state) {
            return set;
        }
    }
}

/// Cycles through the four metric kinds; dense metrics are kept
/// well-conditioned with eigenvalues in roughly [0.5, n+1].
pub fn metric_kind(rng: &mut ChaCha8Rng, n: usize, kind: usize) -> MetricField {
    match kind % 4 {
        0 => MetricField::uniform(),
        1 => MetricField::diagonal(DVector::from_fn(n, |_, _| rng.random_range(0.25..4.0)))
            .expect("positive weights"),
        2 => MetricField::diagonal_field(DiagonalRule::InverseProbability { delta: 1e-9 }),
        _ => {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            MetricField::dense(&a.transpose() * &a + DMatrix::identity(n, n).scale(0.5))
                .expect("spd matrix")
        }
    }
}

pub struct Instance {
    pub state: SquareRootState,
    pub model: SeaModel,
}

pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n_range: (usize, usize),
    extra_max: usize,
    kind: usize,
) -> Instance {
    let n = rng.random_range(n_range.0..=n_range.1);
    let state = random_state(rng, n);
    let extra = rng.random_range(0..=extra_max.min(n.saturating_sub(1)));
    let constraints = random_constraints(rng, &state, extra);
    let metric = metric_kind(rng, n, kind);
    let tau = TauPolicy::Constant(rng.random_range(0.3..2.0));
    let model = SeaModel::new(constraints, metric, tau).expect("valid model");
    Instance { state, model }
}

/// Cell-averaged separable Gaussian density via per-axis Gauss-Legendre
/// quadrature: the best-quadrature discretization of a continuum state.
pub fn cell_averaged_gaussian(
    dq: f64,
    dp: f64,
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
    let (hq, hp) = (dq / 2.0, dp / 2.0);
    move |q, p| avg_1d(q, hq, q0, sigma_q) * avg_1d(p, hp, p0, sigma_p)
}
