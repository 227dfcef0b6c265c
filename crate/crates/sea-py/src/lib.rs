//! Python bindings: the main types and operations of the relaxation library
//! exposed as the `sea_py` extension module.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sea_core::{
    DiagonalRule, IntegratorConfig, MetricField, RecordEvery, SeaModel, SeaSolution,
    SquareRootState, TauPolicy, TrajectoryRecord, TrajectoryStatus,
};

fn err(e: sea_core::SeaError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A probability distribution stored through its square roots.
#[pyclass(name = "State", from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: SquareRootState,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(probabilities: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: SquareRootState::from_probabilities(&probabilities).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_gamma(gamma: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: SquareRootState::from_gamma(DVector::from_vec(gamma)).map_err(err)?,
        })
    }

    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.inner.gamma().iter().copied().collect()
    }

    #[getter]
    fn probabilities(&self) -> Vec<f64> {
        self.inner.probabilities().iter().copied().collect()
    }

    #[pyo3(signature = (k_b = 1.0))]
    fn entropy(&self, k_b: f64) -> f64 {
        sea_core::entropy(&self.inner, k_b)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("State(probabilities={:?})", self.probabilities())
    }
}

/// Conserved-property rows (unity appended automatically) with targets read
/// from a state.
#[pyclass(name = "Constraints", from_py_object)]
#[derive(Clone)]
struct PyConstraints {
    inner: sea_core::ConstraintSet,
}

#[pymethods]
impl PyConstraints {
    #[staticmethod]
    #[pyo3(signature = (rows, state, labels = None))]
    fn for_state(
        rows: Vec<Vec<f64>>,
        state: &PyState,
        labels: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let rows = rows.into_iter().map(DVector::from_vec).collect();
        Ok(Self {
            inner: sea_core::ConstraintSet::for_state(rows, labels, &state.inner).map_err(err)?,
        })
    }

    #[getter]
    fn targets(&self) -> Vec<f64> {
        self.inner.targets().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    fn means(&self, state: &PyState) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .means(&state.inner)
            .map_err(err)?
            .iter()
            .copied()
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.c()
    }
}

/// The metric tensor field on square-root probability space.
#[pyclass(name = "Metric", from_py_object)]
#[derive(Clone)]
struct PyMetric {
    inner: MetricField,
}

#[pymethods]
impl PyMetric {
    #[staticmethod]
    fn uniform() -> Self {
        Self {
            inner: MetricField::uniform(),
        }
    }

    #[staticmethod]
    fn diagonal(weights: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: MetricField::diagonal(DVector::from_vec(weights)).map_err(err)?,
        })
    }

    /// w_j(γ) = 1 / (γ_j² + delta).
    #[staticmethod]
    #[pyo3(signature = (delta = 1e-9))]
    fn diagonal_field(delta: f64) -> Self {
        Self {
            inner: MetricField::diagonal_field(DiagonalRule::InverseProbability { delta }),
        }
    }

    #[staticmethod]
    fn dense(matrix: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = matrix.len();
        if matrix.iter().any(|row| row.len() != n) {
            return Err(PyValueError::new_err("dense metric must be square"));
        }
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in matrix.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(Self {
            inner: MetricField::dense(m).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Metric(kind={:?})", self.inner.kind_name())
    }
}

/// Choice of the relaxation-time multiplier along a trajectory.
#[pyclass(name = "Tau", from_py_object)]
#[derive(Clone)]
struct PyTau {
    inner: TauPolicy,
}

#[pymethods]
impl PyTau {
    #[staticmethod]
    fn constant(value: f64) -> Self {
        Self {
            inner: TauPolicy::Constant(value),
        }
    }

    #[staticmethod]
    fn entropy_production(value: f64) -> Self {
        Self {
            inner: TauPolicy::PrescribedEntropyProduction(value),
        }
    }

    #[staticmethod]
    fn speed(value: f64) -> Self {
        Self {
            inner: TauPolicy::PrescribedSpeed(value),
        }
    }
}

/// Instantaneous steepest-ascent output at one state.
#[pyclass(name = "Solution")]
struct PySolution {
    inner: SeaSolution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta.iter().copied().collect()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn affinity(&self) -> Vec<f64> {
        self.inner.lambda.iter().copied().collect()
    }

    #[getter]
    fn pi_gamma(&self) -> Vec<f64> {
        self.inner.pi_gamma.iter().copied().collect()
    }

    #[getter]
    fn entropy_production(&self) -> f64 {
        self.inner.entropy_production
    }

    #[getter]
    fn dod(&self) -> f64 {
        self.inner.dod
    }

    #[getter]
    fn speed(&self) -> f64 {
        self.inner.speed
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }
}

/// A recorded relaxation trajectory.
#[pyclass(name = "Trajectory")]
struct PyTrajectory {
    inner: TrajectoryRecord,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn status(&self) -> String {
        match &self.inner.status {
            TrajectoryStatus::Converged => "converged".to_string(),
            TrajectoryStatus::MaxTimeReached => "max_time_reached".to_string(),
            TrajectoryStatus::Failed(msg) => format!("error: {msg}"),
        }
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn probabilities(&self) -> Vec<Vec<f64>> {
        self.inner
            .samples
            .iter()
            .map(|s| s.state.probabilities().iter().copied().collect())
            .collect()
    }

    #[getter]
    fn entropy(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.entropy).collect()
    }

    #[getter]
    fn entropy_production(&self) -> Vec<f64> {
        self.inner
            .samples
            .iter()
            .map(|s| s.entropy_production)
            .collect()
    }

    #[getter]
    fn dod(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.dod).collect()
    }

    #[getter]
    fn ell(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.ell).collect()
    }

    #[getter]
    fn path_length(&self) -> f64 {
        self.inner.path_length().length
    }

    #[getter]
    fn final_state(&self) -> PyState {
        PyState {
            inner: self.inner.final_sample().state.clone(),
        }
    }

    #[getter]
    fn final_beta(&self) -> Vec<f64> {
        self.inner.final_beta.iter().copied().collect()
    }

    #[getter]
    fn max_drift(&self) -> f64 {
        self.inner.max_drift()
    }

    fn __len__(&self) -> usize {
        self.inner.samples.len()
    }
}

/// The solved maximum-entropy distribution.
#[pyclass(name = "MaxEnt")]
struct PyMaxEnt {
    inner: sea_core::MaxEntResult,
}

#[pymethods]
impl PyMaxEnt {
    #[getter]
    fn distribution(&self) -> Vec<f64> {
        self.inner.distribution.iter().copied().collect()
    }

    #[getter]
    fn dual_multipliers(&self) -> Vec<f64> {
        self.inner.dual_multipliers.iter().copied().collect()
    }

    #[getter]
    fn achieved_means(&self) -> Vec<f64> {
        self.inner.achieved_means.iter().copied().collect()
    }

    #[getter]
    fn iterations(&self) -> u32 {
        self.inner.iterations
    }

    #[getter]
    fn residual_norm(&self) -> f64 {
        self.inner.residual_norm
    }
}

/// Constraints, metric, and τ policy bundled into the relaxation model.
#[pyclass(name = "Model")]
struct PyModel {
    inner: SeaModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (constraints, metric, tau, k_b = 1.0))]
    fn new(constraints: PyConstraints, metric: PyMetric, tau: PyTau, k_b: f64) -> PyResult<Self> {
        let inner = SeaModel::new(constraints.inner, metric.inner, tau.inner)
            .map_err(err)?
            .with_k_b(k_b)
            .map_err(err)?;
        Ok(Self { inner })
    }

    fn sea_direction(&self, state: &PyState) -> PyResult<PySolution> {
        let mask = self.inner.support_of(&state.inner);
        Ok(PySolution {
            inner: self.inner.sea_direction(&state.inner, &mask).map_err(err)?,
        })
    }

    fn sea_direction_cramer(&self, state: &PyState) -> PyResult<PySolution> {
        let mask = self.inner.support_of(&state.inner);
        Ok(PySolution {
            inner: self
                .inner
                .sea_direction_cramer(&state.inner, &mask)
                .map_err(err)?,
        })
    }

    fn degree_of_disequilibrium(&self, state: &PyState) -> PyResult<f64> {
        let mask = self.inner.support_of(&state.inner);
        self.inner
            .degree_of_disequilibrium(&state.inner, &mask)
            .map_err(err)
    }

    fn resolve_tau(&self, state: &PyState) -> PyResult<f64> {
        let mask = self.inner.support_of(&state.inner);
        self.inner.resolve_tau(&state.inner, &mask).map_err(err)
    }

    #[pyo3(signature = (state, rel_tol = 1e-8, abs_tol = 1e-10, stop_dod = 1e-16, max_time = 1e6, record_every_steps = 1))]
    fn integrate(
        &self,
        state: &PyState,
        rel_tol: f64,
        abs_tol: f64,
        stop_dod: f64,
        max_time: f64,
        record_every_steps: u32,
    ) -> PyResult<PyTrajectory> {
        let config = IntegratorConfig {
            rel_tol,
            abs_tol,
            stop_dod,
            max_time,
            record_every: RecordEvery::Steps(record_every_steps),
            ..IntegratorConfig::default()
        };
        Ok(PyTrajectory {
            inner: sea_core::integrate(&self.inner, &state.inner, &config).map_err(err)?,
        })
    }

    /// MaxEnt endpoint for the targets read from `state`, on its support.
    fn solve_maxent(&self, state: &PyState) -> PyResult<PyMaxEnt> {
        let mask = self.inner.support_of(&state.inner);
        let constraints = self.inner.constraints.retargeted(&state.inner).map_err(err)?;
        Ok(PyMaxEnt {
            inner: sea_core::solve_maxent(&constraints, &mask).map_err(err)?,
        })
    }

    /// dict with dod, affinity_norm_sq, d_sea, kl, d_sea_complete.
    fn disequilibrium_report<'py>(
        &self,
        py: Python<'py>,
        state: &PyState,
    ) -> PyResult<Bound<'py, PyDict>> {
        let report = sea_core::disequilibrium_report(&self.inner, &state.inner).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("dod", report.dod)?;
        out.set_item("affinity_norm_sq", report.affinity_norm_sq)?;
        out.set_item("d_sea", report.d_sea)?;
        out.set_item("kl", report.kl)?;
        out.set_item("d_sea_complete", report.d_sea_complete)?;
        Ok(out)
    }
}

/// Relative entropy of a state against a MaxEnt result.
#[pyfunction]
fn kl_divergence(state: &PyState, maxent: &PyMaxEnt) -> PyResult<f64> {
    sea_core::kl_divergence(&state.inner, &maxent.inner).map_err(err)
}

/// A rectangular position-momentum grid.
#[pyclass(name = "PhaseGrid", from_py_object)]
#[derive(Clone)]
struct PyPhaseGrid {
    inner: sea_core::PhaseGrid,
}

#[pymethods]
impl PyPhaseGrid {
    #[new]
    fn new(
        q_min: f64,
        q_max: f64,
        p_min: f64,
        p_max: f64,
        n_q: usize,
        n_p: usize,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: sea_core::PhaseGrid::new(q_min, q_max, p_min, p_max, n_q, n_p).map_err(err)?,
        })
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells()
    }

    #[getter]
    fn cell_measure(&self) -> f64 {
        self.inner.cell_measure()
    }

    fn centers(&self) -> Vec<(f64, f64)> {
        (0..self.inner.n_cells()).map(|j| self.inner.center(j)).collect()
    }
}

/// Discretizes a density callable f(q, p) onto the grid with conserved rows
/// {H, M (optional), I}; the potential is harmonic when omega is given,
/// otherwise free.
#[pyfunction]
#[pyo3(signature = (grid, density, mass = 1.0, omega = None, momentum = true))]
fn discretize_phase(
    grid: &PyPhaseGrid,
    density: Bound<'_, PyAny>,
    mass: f64,
    omega: Option<f64>,
    momentum: bool,
) -> PyResult<(PyState, PyConstraints)> {
    let potential = match omega {
        Some(omega) => sea_core::Potential::Harmonic { omega },
        None => sea_core::Potential::Free,
    };
    let model = sea_core::PhaseModel::new(mass, potential).map_err(err)?;
    let failure: RefCell<Option<PyErr>> = RefCell::new(None);
    let rule = |q: f64, p: f64| -> f64 {
        match density.call1((q, p)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let result = sea_core::discretize(&model, &grid.inner, rule, momentum);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let (state, constraints) = result.map_err(err)?;
    Ok((
        PyState { inner: state },
        PyConstraints { inner: constraints },
    ))
}

#[pymodule]
fn sea_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyState>()?;
    m.add_class::<PyConstraints>()?;
    m.add_class::<PyMetric>()?;
    m.add_class::<PyTau>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyMaxEnt>()?;
    m.add_class::<PyPhaseGrid>()?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(discretize_phase, m)?)?;
    Ok(())
}
