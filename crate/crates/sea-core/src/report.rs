//! Output writers: the trajectory CSV table and JSON-shaped reports.
//!
//! Every floating-point number is written with 17 significant digits so two
//! runs of the same config produce byte-identical, diffable files. Writes go
//! through a temp file and a rename, so interrupted runs never leave
//! truncated outputs.

use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::error::{Result, SeaError};
use crate::integrate::{TrajectoryRecord, TrajectoryStatus};

/// 17 significant digits: enough to reproduce any f64 bit pattern exactly.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        // JSON has no NaN; reports should never contain one.
        "null".to_string()
    } else if x.is_infinite() {
        if x > 0.0 {
            "1e999".to_string()
        } else {
            "-1e999".to_string()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// Atomically writes `content` to `path` (temp file + rename).
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))?;
    tmp.write_all(content.as_bytes())?;
    tmp.persist(path).map_err(|e| SeaError::Io(e.error))?;
    Ok(())
}

/// Renders a JSON value with deterministic key order and full-precision
/// numbers.
pub fn render_json(value: &Value) -> String {
    let mut out = String::new();
    render(value, 0, &mut out);
    out.push('\n');
    out
}

fn render(value: &Value, indent: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&format_f64(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization"));
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push('\n');
                push_indent(indent + 1, out);
                render(item, indent + 1, out);
            }
            out.push('\n');
            push_indent(indent, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            // serde_json's default map is a BTreeMap, so iteration order is
            // already deterministic (sorted by key).
            for (k, (key, item)) in map.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push('\n');
                push_indent(indent + 1, out);
                out.push_str(&serde_json::to_string(key).expect("key serialization"));
                out.push_str(": ");
                render(item, indent + 1, out);
            }
            out.push('\n');
            push_indent(indent, out);
            out.push('}');
        }
    }
}

fn push_indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

/// Builds a JSON array of full-precision floats.
pub fn float_array(values: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(values.into_iter().map(json_f64).collect())
}

/// A float as a JSON value (NaN/inf degrade to null, which never happens in
/// healthy runs).
pub fn json_f64(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

pub fn status_name(status: &TrajectoryStatus) -> String {
    match status {
        TrajectoryStatus::Converged => "converged".to_string(),
        TrajectoryStatus::MaxTimeReached => "max_time_reached".to_string(),
        TrajectoryStatus::Failed(msg) => format!("error: {msg}"),
    }
}

/// The trajectory table: t, p_1…p_n, S, Pi_S, DoD, ell, drift_max.
pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let n = record
        .samples
        .first()
        .map(|s| s.state.len())
        .unwrap_or(0);
    let mut out = String::new();
    out.push('t');
    for j in 1..=n {
        out.push_str(&format!(",p_{j}"));
    }
    out.push_str(",S,Pi_S,DoD,ell,drift_max\n");
    for sample in &record.samples {
        out.push_str(&format_f64(sample.t));
        let p = sample.state.probabilities();
        for j in 0..n {
            out.push(',');
            out.push_str(&format_f64(p[j]));
        }
        let drift = (0..record.targets.len())
            .map(|i| {
                (sample.means[i] - record.targets[i]).abs() / (1.0 + record.targets[i].abs())
            })
            .fold(0.0f64, f64::max);
        for v in [
            sample.entropy,
            sample.entropy_production,
            sample.dod,
            sample.ell,
            drift,
        ] {
            out.push(',');
            out.push_str(&format_f64(v));
        }
        out.push('\n');
    }
    out
}
