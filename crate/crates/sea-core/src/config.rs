//! Run configuration: a single structured text document describing the
//! problem, metric, τ policy, integrator settings, and output paths.
//!
//! Configs parse from TOML with field-addressed errors; every omitted
//! optional field takes its default at parse time, so the resolved
//! configuration echoed into output metadata re-parses to an identical
//! value.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{SeaModel, TauPolicy};
use crate::error::{Result, SeaError};
use crate::integrate::{IntegratorConfig, RecordEvery};
use crate::metric::{DiagonalRule, MetricField};
use crate::phase::{discretize, PhaseGrid, PhaseModel, Potential};
use crate::state::{ConstraintSet, SquareRootState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_k_b")]
    pub k_b: f64,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub tau: TauConfig,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_k_b() -> f64 {
    1.0
}

/// Either an explicit discrete problem (probabilities plus constraint rows)
/// or a phase-space block; exactly one of the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub probabilities: Option<Vec<f64>>,
    #[serde(default)]
    pub constraints: Vec<ConstraintRowConfig>,
    #[serde(default)]
    pub phase: Option<PhaseConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRowConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_q: usize,
    pub n_p: usize,
    #[serde(default = "default_mass")]
    pub mass: f64,
    pub potential: PotentialConfig,
    pub density: DensityConfig,
    /// Include the momentum row among the conserved properties.
    #[serde(default = "default_true")]
    pub momentum: bool,
}

fn default_mass() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Free,
    Harmonic { omega: f64 },
    /// Two-column (q, V) text file; relative paths resolve against the
    /// config file's directory.
    Table { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    /// f ∝ exp(−H/temperature).
    Boltzmann { temperature: f64 },
    Gaussian {
        q0: f64,
        p0: f64,
        sigma_q: f64,
        sigma_p: f64,
    },
    Mixture { components: Vec<GaussianComponent> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianComponent {
    pub weight: f64,
    pub q0: f64,
    pub p0: f64,
    pub sigma_q: f64,
    pub sigma_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricConfig {
    Uniform,
    Diagonal { weights: Vec<f64> },
    DiagonalField {
        #[serde(default = "default_delta")]
        delta: f64,
    },
    Dense { matrix: Vec<Vec<f64>> },
}

fn default_delta() -> f64 {
    1e-9
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig::Uniform
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TauConfig {
    Constant { value: f64 },
    EntropyProduction { value: f64 },
    Speed { value: f64 },
}

impl Default for TauConfig {
    fn default() -> Self {
        TauConfig::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default)]
    pub initial_step: Option<f64>,
    #[serde(default)]
    pub max_step: Option<f64>,
    #[serde(default = "default_stop_dod")]
    pub stop_dod: f64,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default)]
    pub record_every_steps: Option<u32>,
    #[serde(default)]
    pub record_every_time: Option<f64>,
}

fn default_rel_tol() -> f64 {
    1e-8
}

fn default_abs_tol() -> f64 {
    1e-10
}

fn default_stop_dod() -> f64 {
    1e-16
}

fn default_max_time() -> f64 {
    1e6
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            initial_step: None,
            max_step: None,
            stop_dod: default_stop_dod(),
            max_time: default_max_time(),
            record_every_steps: None,
            record_every_time: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_summary")]
    pub summary: String,
    #[serde(default = "default_maxent_report")]
    pub maxent_report: String,
    #[serde(default = "default_analysis_report")]
    pub analysis_report: String,
}

fn default_trajectory() -> String {
    "trajectory.csv".to_string()
}

fn default_summary() -> String {
    "summary.json".to_string()
}

fn default_maxent_report() -> String {
    "maxent.json".to_string()
}

fn default_analysis_report() -> String {
    "analysis.json".to_string()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            trajectory: default_trajectory(),
            summary: default_summary(),
            maxent_report: default_maxent_report(),
            analysis_report: default_analysis_report(),
        }
    }
}

/// Everything a command needs, built and validated from a config.
#[derive(Debug)]
pub struct BuiltProblem {
    pub model: SeaModel,
    pub initial: SquareRootState,
    pub integrator: IntegratorConfig,
    pub grid: Option<GridMeta>,
}

/// Grid geometry echoed into outputs of phase-model runs.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeta {
    pub grid: PhaseGrid,
    pub q_centers: Vec<f64>,
    pub p_centers: Vec<f64>,
}

impl RunConfig {
    /// Parses a TOML document; parse errors carry line/field addresses.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SeaError::InvalidConfig {
            detail: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Validates and builds the model, initial state, and integrator config.
    /// `base_dir` anchors relative paths referenced by the config.
    pub fn build(&self, base_dir: &Path) -> Result<BuiltProblem> {
        if !(self.k_b.is_finite() && self.k_b > 0.0) {
            return Err(SeaError::InvalidConfig {
                detail: format!("k_b must be finite and positive, got {}", self.k_b),
            });
        }
        let (initial, constraints, grid) = self.build_problem(base_dir)?;
        let metric = self.build_metric(initial.len())?;
        let tau = match self.tau {
            TauConfig::Constant { value } => TauPolicy::Constant(value),
            TauConfig::EntropyProduction { value } => {
                TauPolicy::PrescribedEntropyProduction(value)
            }
            TauConfig::Speed { value } => TauPolicy::PrescribedSpeed(value),
        };
        let model = SeaModel::new(constraints, metric, tau)?.with_k_b(self.k_b)?;
        let integrator = self.build_integrator()?;
        Ok(BuiltProblem {
            model,
            initial,
            integrator,
            grid,
        })
    }

    fn build_problem(
        &self,
        base_dir: &Path,
    ) -> Result<(SquareRootState, ConstraintSet, Option<GridMeta>)> {
        match (&self.problem.probabilities, &self.problem.phase) {
            (Some(_), Some(_)) => Err(SeaError::InvalidConfig {
                detail: "give either problem.probabilities or problem.phase, not both".to_string(),
            }),
            (None, None) => Err(SeaError::InvalidConfig {
                detail: "problem needs probabilities or a phase block".to_string(),
            }),
            (Some(p), None) => {
                if p.len() < 2 {
                    return Err(SeaError::InvalidConfig {
                        detail: format!("need at least 2 probabilities, got {}", p.len()),
                    });
                }
                let total: f64 = p.iter().sum();
                if !total.is_finite() || (total - 1.0).abs() > 1e-6 {
                    return Err(SeaError::InvalidConfig {
                        detail: format!("probabilities must sum to 1 (got {total})"),
                    });
                }
                let normalized: Vec<f64> = p.iter().map(|&v| v / total).collect();
                let initial = SquareRootState::from_probabilities(&normalized)?;
                let mut rows = Vec::new();
                let mut labels = Vec::new();
                for (i, row) in self.problem.constraints.iter().enumerate() {
                    if row.values.len() != p.len() {
                        return Err(SeaError::InvalidConfig {
                            detail: format!(
                                "constraint row {} has {} values, expected {}",
                                i,
                                row.values.len(),
                                p.len()
                            ),
                        });
                    }
                    rows.push(DVector::from_row_slice(&row.values));
                    labels.push(row.name.clone().unwrap_or_else(|| format!("C{i}")));
                }
                let constraints = ConstraintSet::for_state(rows, Some(labels), &initial)?;
                Ok((initial, constraints, None))
            }
            (None, Some(phase)) => {
                let grid = PhaseGrid::new(
                    phase.q_min, phase.q_max, phase.p_min, phase.p_max, phase.n_q, phase.n_p,
                )?;
                let potential = match &phase.potential {
                    PotentialConfig::Free => Potential::Free,
                    PotentialConfig::Harmonic { omega } => Potential::Harmonic { omega: *omega },
                    PotentialConfig::Table { path } => {
                        let resolved = base_dir.join(path);
                        let text = std::fs::read_to_string(&resolved).map_err(|e| {
                            SeaError::InvalidConfig {
                                detail: format!(
                                    "cannot read potential table {}: {e}",
                                    resolved.display()
                                ),
                            }
                        })?;
                        Potential::from_table_text(&text)?
                    }
                };
                let model = PhaseModel::new(phase.mass, potential)?;
                let density = self.build_density(&model, phase)?;
                let (initial, constraints) =
                    discretize(&model, &grid, |q, p| density(q, p), phase.momentum)?;
                let meta = GridMeta {
                    q_centers: grid.q_centers(),
                    p_centers: grid.p_centers(),
                    grid,
                };
                Ok((initial, constraints, Some(meta)))
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn build_density(
        &self,
        model: &PhaseModel,
        phase: &PhaseConfig,
    ) -> Result<Box<dyn Fn(f64, f64) -> f64 + '_>> {
        match &phase.density {
            DensityConfig::Boltzmann { temperature } => {
                if !(temperature.is_finite() && *temperature > 0.0) {
                    return Err(SeaError::InvalidConfig {
                        detail: format!("temperature must be positive, got {temperature}"),
                    });
                }
                let t = *temperature;
                let model = model.clone();
                Ok(Box::new(move |q, p| {
                    model
                        .hamiltonian(q, p)
                        .map(|h| (-h / t).exp())
                        .unwrap_or(f64::NAN)
                }))
            }
            DensityConfig::Gaussian {
                q0,
                p0,
                sigma_q,
                sigma_p,
            } => {
                let g = GaussianComponent {
                    weight: 1.0,
                    q0: *q0,
                    p0: *p0,
                    sigma_q: *sigma_q,
                    sigma_p: *sigma_p,
                };
                Self::gaussian_mixture(vec![g])
            }
            DensityConfig::Mixture { components } => {
                if components.is_empty() {
                    return Err(SeaError::InvalidConfig {
                        detail: "mixture needs at least one component".to_string(),
                    });
                }
                Self::gaussian_mixture(components.clone())
            }
        }
    }

    fn gaussian_mixture(
        components: Vec<GaussianComponent>,
    ) -> Result<Box<dyn Fn(f64, f64) -> f64 + 'static>> {
        for (i, g) in components.iter().enumerate() {
            if !(g.weight.is_finite() && g.weight > 0.0) {
                return Err(SeaError::InvalidConfig {
                    detail: format!("mixture component {i}: weight must be positive"),
                });
            }
            if !(g.sigma_q > 0.0 && g.sigma_p > 0.0) {
                return Err(SeaError::InvalidConfig {
                    detail: format!("mixture component {i}: sigmas must be positive"),
                });
            }
        }
        Ok(Box::new(move |q, p| {
            components
                .iter()
                .map(|g| {
                    let uq = (q - g.q0) / g.sigma_q;
                    let up = (p - g.p0) / g.sigma_p;
                    g.weight * (-0.5 * (uq * uq + up * up)).exp()
                })
                .sum()
        }))
    }

    fn build_metric(&self, n: usize) -> Result<MetricField> {
        match &self.metric {
            MetricConfig::Uniform => Ok(MetricField::uniform()),
            MetricConfig::Diagonal { weights } => {
                if weights.len() != n {
                    return Err(SeaError::InvalidConfig {
                        detail: format!(
                            "metric weights length {} does not match event count {n}",
                            weights.len()
                        ),
                    });
                }
                MetricField::diagonal(DVector::from_row_slice(weights))
            }
            MetricConfig::DiagonalField { delta } => {
                if !(delta.is_finite() && *delta > 0.0) {
                    return Err(SeaError::InvalidConfig {
                        detail: format!("diagonal_field delta must be positive, got {delta}"),
                    });
                }
                Ok(MetricField::diagonal_field(
                    DiagonalRule::InverseProbability { delta: *delta },
                ))
            }
            MetricConfig::Dense { matrix } => {
                if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
                    return Err(SeaError::InvalidConfig {
                        detail: format!("dense metric must be {n}x{n}"),
                    });
                }
                let mut m = DMatrix::zeros(n, n);
                for (i, row) in matrix.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        m[(i, j)] = v;
                    }
                }
                MetricField::dense(m)
            }
        }
    }

    fn build_integrator(&self) -> Result<IntegratorConfig> {
        let s = &self.integrator;
        let record_every = match (s.record_every_steps, s.record_every_time) {
            (Some(_), Some(_)) => {
                return Err(SeaError::InvalidConfig {
                    detail: "give record_every_steps or record_every_time, not both".to_string(),
                })
            }
            (Some(k), None) => RecordEvery::Steps(k),
            (None, Some(dt)) => RecordEvery::Time(dt),
            (None, None) => RecordEvery::Steps(1),
        };
        let config = IntegratorConfig {
            rel_tol: s.rel_tol,
            abs_tol: s.abs_tol,
            initial_step: s.initial_step,
            max_step: s.max_step,
            stop_dod: s.stop_dod,
            max_time: s.max_time,
            record_every,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Output path helper: files land in `out_dir`, or next to the config when
/// no output directory is given.
pub fn resolve_output(out_dir: Option<&Path>, config_path: &Path, name: &str) -> PathBuf {
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => config_path
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    dir.join(name)
}
