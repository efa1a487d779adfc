//! JSON envelope, pass/fail checks and output files.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// How `value` is compared with `tolerance`.
    pub relation: String,
    pub pass: bool,
}

impl Check {
    /// `value ≤ tol`.
    pub fn le(name: &str, value: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: tol,
            relation: "value <= tolerance".into(),
            pass: value <= tol,
        }
    }

    /// `value ≥ −tol`.
    pub fn nonneg(name: &str, value: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: tol,
            relation: "value >= -tolerance".into(),
            pass: value >= -tol,
        }
    }

    /// `value ≥ bound`.
    pub fn ge(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: bound,
            relation: "value >= tolerance".into(),
            pass: value >= bound,
        }
    }

    /// `lo ≤ value ≤ hi`, reported as `|value − mid| ≤ half-width`.
    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        let mid = 0.5 * (lo + hi);
        Check {
            name: name.into(),
            value,
            tolerance: 0.5 * (hi - lo),
            relation: format!("|value - {mid}| <= tolerance"),
            pass: (lo..=hi).contains(&value),
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            tolerance: 1.0,
            relation: "value == tolerance".into(),
            pass: ok,
        }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {:<32} value={:<13.6e} tol={:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

/// What a command hands back to the driver.
pub struct Outcome {
    pub results: Value,
    pub checks: Vec<Check>,
    /// Header line and rows for the CSV companion file.
    pub csv: Option<(String, Vec<String>)>,
}

pub fn envelope(command: &str, config: &RunConfig, outcome: &Outcome, timestamp: &str) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "timestamp": timestamp,
        "results": outcome.results,
        "checks": outcome.checks,
    })
}

pub fn error_block(command: &str, kind: &str, message: &str) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "error": { "kind": kind, "message": message },
    })
}

/// `out` is either a `.json` file path or a directory that receives
/// `<command>.json` (and `<command>.csv`).
pub fn output_paths(out: &Path, command: &str) -> (PathBuf, PathBuf) {
    if out.extension().is_some_and(|e| e == "json") {
        (out.to_path_buf(), out.with_extension("csv"))
    } else {
        (out.join(format!("{command}.json")), out.join(format!("{command}.csv")))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_outputs(
    out: &Path,
    command: &str,
    doc: &Value,
    csv: Option<&(String, Vec<String>)>,
) -> Result<PathBuf, CliError> {
    let (json_path, csv_path) = output_paths(out, command);
    if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(&json_path, text).map_err(|e| io_err(&json_path, e))?;
    if let Some((header, rows)) = csv {
        let mut body = String::with_capacity(64 * (rows.len() + 1));
        body.push_str(header);
        body.push('\n');
        for r in rows {
            body.push_str(r);
            body.push('\n');
        }
        std::fs::write(&csv_path, body).map_err(|e| io_err(&csv_path, e))?;
    }
    Ok(json_path)
}
