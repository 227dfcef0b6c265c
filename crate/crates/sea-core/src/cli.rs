//! Batch command implementations behind the `sea` binary: parse and build a
//! run configuration, execute, and emit trajectory/report files.
//!
//! Exit codes: 0 success (converged), 2 config error, 3 infeasible
//! constraints, 4 numerical failure, 5 max_time reached (partial outputs
//! still written).

use std::path::Path;

use serde_json::{json, Value};

use crate::config::{resolve_output, BuiltProblem, GridMeta, RunConfig};
use crate::error::SeaError;
use crate::integrate::{integrate, TrajectoryRecord, TrajectoryStatus};
use crate::maxent::{disequilibrium_report, kl_divergence, solve_maxent};
use crate::report::{
    float_array, json_f64, render_json, status_name, trajectory_csv, write_atomic,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_MAX_TIME: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    Maxent,
    Analyze,
}

/// Maps an error to its exit code; errors raised while parsing or building
/// the configuration count as config errors unless they signal
/// infeasibility.
pub fn error_exit_code(err: &SeaError, during_build: bool) -> i32 {
    match err {
        SeaError::InfeasibleTargets { .. } => EXIT_INFEASIBLE,
        _ if during_build => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn load_and_build(config_path: &Path) -> Result<(RunConfig, BuiltProblem), (SeaError, i32)> {
    let config =
        RunConfig::load(config_path).map_err(|e| {
            let code = error_exit_code(&e, true);
            (e, code)
        })?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let built = config.build(base).map_err(|e| {
        let code = error_exit_code(&e, true);
        (e, code)
    })?;
    Ok((config, built))
}

fn config_echo(config: &RunConfig) -> Value {
    serde_json::to_value(config).unwrap_or(Value::Null)
}

fn grid_block(grid: &Option<GridMeta>) -> Value {
    match grid {
        None => Value::Null,
        Some(meta) => json!({
            "n_q": meta.grid.n_q,
            "n_p": meta.grid.n_p,
            "dq": json_f64(meta.grid.dq()),
            "dp": json_f64(meta.grid.dp()),
            "cell_measure": json_f64(meta.grid.cell_measure()),
            "q_centers": float_array(meta.q_centers.iter().copied()),
            "p_centers": float_array(meta.p_centers.iter().copied()),
        }),
    }
}

fn maxent_block(
    built: &BuiltProblem,
    record: Option<&TrajectoryRecord>,
) -> (Value, Value, Value) {
    // MaxEnt endpoint oracle plus relative entropies of the initial and
    // final states against it. Best-effort: a failure leaves nulls.
    let mask = built.model.support_of(&built.initial);
    let constraints = match built.model.constraints.retargeted(&built.initial) {
        Ok(c) => c,
        Err(_) => return (Value::Null, Value::Null, Value::Null),
    };
    match solve_maxent(&constraints, &mask) {
        Ok(result) => {
            let kl_initial = kl_divergence(&built.initial, &result)
                .map(json_f64)
                .unwrap_or(Value::Null);
            let kl_endpoint = record
                .map(|r| {
                    kl_divergence(&r.final_sample().state, &result)
                        .map(json_f64)
                        .unwrap_or(Value::Null)
                })
                .unwrap_or(Value::Null);
            let block = json!({
                "distribution": float_array(result.distribution.iter().copied()),
                "dual_multipliers": float_array(result.dual_multipliers.iter().copied()),
                "achieved_means": float_array(result.achieved_means.iter().copied()),
                "iterations": result.iterations,
                "residual_norm": json_f64(result.residual_norm),
            });
            (block, kl_initial, kl_endpoint)
        }
        Err(e) => {
            log::warn!("maxent endpoint oracle failed: {e}");
            (Value::Null, Value::Null, Value::Null)
        }
    }
}

/// `sea simulate`: integrate the configured problem, write the trajectory
/// table and the summary document.
pub fn run_simulate(config_path: &Path, out_dir: Option<&Path>, quiet: bool) -> i32 {
    let (config, built) = match load_and_build(config_path) {
        Ok(v) => v,
        Err((e, code)) => {
            eprintln!("sea simulate: {}: {e}", config_path.display());
            return code;
        }
    };
    let record = match integrate(&built.model, &built.initial, &built.integrator) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("sea simulate: {}: {e}", config_path.display());
            return error_exit_code(&e, false);
        }
    };

    let trajectory_path = resolve_output(out_dir, config_path, &config.output.trajectory);
    if let Err(e) = write_atomic(&trajectory_path, &trajectory_csv(&record)) {
        eprintln!("sea simulate: cannot write {}: {e}", trajectory_path.display());
        return EXIT_NUMERICAL;
    }

    let (maxent, kl_initial, kl_endpoint) = maxent_block(&built, Some(&record));
    let last = record.final_sample();
    let length = record.path_length();
    let summary = json!({
        "status": status_name(&record.status),
        "endpoint": {
            "probabilities": float_array(last.state.probabilities().iter().copied()),
            "beta": float_array(record.final_beta.iter().copied()),
            "entropy": json_f64(last.entropy),
            "dod": json_f64(last.dod),
            "time": json_f64(last.t),
        },
        "d_sea": json_f64(length.length),
        "d_sea_tail_bound": json_f64(length.tail_bound),
        "kl_initial_to_maxent": kl_initial,
        "kl_endpoint_to_maxent": kl_endpoint,
        "maxent": maxent,
        "targets": float_array(record.targets.iter().copied()),
        "constraint_labels": built.model.constraints.labels().to_vec(),
        "diagnostics": {
            "accepted_steps": record.accepted_steps,
            "rejected_steps": record.rejected_steps,
            "samples": record.samples.len(),
            "final_time": json_f64(last.t),
            "max_drift": json_f64(record.max_drift()),
        },
        "grid": grid_block(&built.grid),
        "config": config_echo(&config),
    });
    let summary_path = resolve_output(out_dir, config_path, &config.output.summary);
    if let Err(e) = write_atomic(&summary_path, &render_json(&summary)) {
        eprintln!("sea simulate: cannot write {}: {e}", summary_path.display());
        return EXIT_NUMERICAL;
    }

    if !quiet {
        println!(
            "simulate {}: {} (t = {:.6e}, steps = {}, d_sea = {:.6e})",
            config_path.display(),
            status_name(&record.status),
            last.t,
            record.accepted_steps,
            length.length
        );
    }
    match record.status {
        TrajectoryStatus::Converged => EXIT_OK,
        TrajectoryStatus::MaxTimeReached => EXIT_MAX_TIME,
        TrajectoryStatus::Failed(_) => EXIT_NUMERICAL,
    }
}

/// `sea maxent`: solve the constrained MaxEnt problem with targets read from
/// the configured initial distribution and write the report.
pub fn run_maxent(config_path: &Path, out_dir: Option<&Path>, quiet: bool) -> i32 {
    let (config, built) = match load_and_build(config_path) {
        Ok(v) => v,
        Err((e, code)) => {
            eprintln!("sea maxent: {}: {e}", config_path.display());
            return code;
        }
    };
    let mask = built.model.support_of(&built.initial);
    let constraints = match built.model.constraints.retargeted(&built.initial) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("sea maxent: {}: {e}", config_path.display());
            return error_exit_code(&e, true);
        }
    };
    let result = match solve_maxent(&constraints, &mask) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("sea maxent: {}: {e}", config_path.display());
            return error_exit_code(&e, false);
        }
    };
    let report = json!({
        "distribution": float_array(result.distribution.iter().copied()),
        "dual_multipliers": float_array(result.dual_multipliers.iter().copied()),
        "achieved_means": float_array(result.achieved_means.iter().copied()),
        "targets": float_array(constraints.targets().iter().copied()),
        "constraint_labels": constraints.labels().to_vec(),
        "iterations": result.iterations,
        "residual_norm": json_f64(result.residual_norm),
        "support": result.support.indices().to_vec(),
        "grid": grid_block(&built.grid),
        "config": config_echo(&config),
    });
    let path = resolve_output(out_dir, config_path, &config.output.maxent_report);
    if let Err(e) = write_atomic(&path, &render_json(&report)) {
        eprintln!("sea maxent: cannot write {}: {e}", path.display());
        return EXIT_NUMERICAL;
    }
    if !quiet {
        println!(
            "maxent {}: solved in {} iterations (residual {:.3e})",
            config_path.display(),
            result.iterations,
            result.residual_norm
        );
    }
    EXIT_OK
}

/// `sea analyze`: the disequilibrium measures of the configured initial
/// state.
pub fn run_analyze(config_path: &Path, out_dir: Option<&Path>, quiet: bool) -> i32 {
    let (config, built) = match load_and_build(config_path) {
        Ok(v) => v,
        Err((e, code)) => {
            eprintln!("sea analyze: {}: {e}", config_path.display());
            return code;
        }
    };
    let report = match disequilibrium_report(&built.model, &built.initial) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("sea analyze: {}: {e}", config_path.display());
            return error_exit_code(&e, false);
        }
    };
    let value = json!({
        "dod": json_f64(report.dod),
        "affinity_norm_sq": json_f64(report.affinity_norm_sq),
        "d_sea": json_f64(report.d_sea),
        "d_sea_complete": report.d_sea_complete,
        "kl": json_f64(report.kl),
        "grid": grid_block(&built.grid),
        "config": config_echo(&config),
    });
    let path = resolve_output(out_dir, config_path, &config.output.analysis_report);
    if let Err(e) = write_atomic(&path, &render_json(&value)) {
        eprintln!("sea analyze: cannot write {}: {e}", path.display());
        return EXIT_NUMERICAL;
    }
    if !quiet {
        println!(
            "analyze {}: dod = {:.6e}, d_sea = {:.6e}, kl = {:.6e}",
            config_path.display(),
            report.dod,
            report.d_sea,
            report.kl
        );
    }
    EXIT_OK
}

/// Fans independent config files out to `jobs` parallel workers and returns
/// the worst exit code.
pub fn run_command(
    kind: CommandKind,
    configs: &[std::path::PathBuf],
    jobs: usize,
    out_dir: Option<&Path>,
    quiet: bool,
) -> i32 {
    let jobs = jobs.max(1);
    let run_one = |path: &Path| -> i32 {
        match kind {
            CommandKind::Simulate => run_simulate(path, out_dir, quiet),
            CommandKind::Maxent => run_maxent(path, out_dir, quiet),
            CommandKind::Analyze => run_analyze(path, out_dir, quiet),
        }
    };
    if jobs == 1 || configs.len() <= 1 {
        return configs.iter().map(|p| run_one(p)).max().unwrap_or(EXIT_OK);
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let worst = std::sync::atomic::AtomicI32::new(EXIT_OK);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(configs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let code = run_one(&configs[i]);
                worst.fetch_max(code, std::sync::atomic::Ordering::Relaxed);
            });
        }
    });
    worst.into_inner()
}

/// Companion to [`run_simulate`] for library callers: integrate a built
/// problem without touching the filesystem.
pub fn simulate_in_memory(built: &BuiltProblem) -> crate::error::Result<TrajectoryRecord> {
    integrate(&built.model, &built.initial, &built.integrator)
}
