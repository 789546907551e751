use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;

/// A tested numeric: passes when `value <= tolerance` (for `z`-scores the
/// tolerance is the threshold).
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Check {
        Check { name: name.into(), value, tolerance, pass: value <= tolerance }
    }

    /// Boolean outcome recorded with zero tolerance (`value` is 0 or 1 failures).
    pub fn flag(name: impl Into<String>, ok: bool) -> Check {
        Check { name: name.into(), value: if ok { 0.0 } else { 1.0 }, tolerance: 0.0, pass: ok }
    }
}

#[derive(Debug, Serialize)]
struct Provenance {
    version: &'static str,
    git_hash: String,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    experiment: &'a str,
    inputs: &'a ExperimentConfig,
    seed: u64,
    provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
    pass: bool,
    checks: &'a [Check],
    results: &'a serde_json::Value,
}

fn git_hash() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn write_report(
    dir: &Path,
    cfg: &ExperimentConfig,
    seed: u64,
    checks: &[Check],
    results: &serde_json::Value,
) -> std::io::Result<()> {
    let reproducible = cfg.reproducible.unwrap_or(false);
    let timestamp = (!reproducible).then(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    });
    let report = Report {
        experiment: cfg.experiment.as_deref().unwrap_or(""),
        inputs: cfg,
        seed,
        provenance: Provenance { version: env!("CARGO_PKG_VERSION"), git_hash: git_hash() },
        timestamp,
        pass: checks.iter().all(|c| c.pass),
        checks,
        results,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)
}

/// CSV with a header row; numbers carry 17 significant digits.
pub fn write_series(dir: &Path, header: &[String], rows: &[Vec<f64>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(dir.join("series.csv"))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()
}
