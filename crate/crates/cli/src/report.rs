use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// One assertion of a suite.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, tolerance: 1.0, pass: ok }
    }
}

/// A named CSV table.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

#[derive(Debug)]
pub struct SuiteOutput {
    pub results: Value,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

#[derive(Serialize)]
pub struct Report<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config: Value,
    pub results: &'a Value,
    pub checks: &'a [Check],
    pub tables: Vec<String>,
    pub pass: bool,
    /// Seconds since the Unix epoch; the only field that varies between replays.
    pub generated_unix: u64,
}

pub const REPORT_FILE: &str = "report.json";

/// Refuses to touch an existing report unless `force` is set.
pub fn prepare_output(dir: &Path, force: bool) -> Result<PathBuf, CliError> {
    let report = dir.join(REPORT_FILE);
    if report.exists() && !force {
        return Err(CliError::WouldOverwrite(report));
    }
    Ok(report)
}

pub fn write_report(dir: &Path, report: &Report<'_>, tables: &[Table]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        std::fs::write(&path, &t.csv).map_err(|e| CliError::Io(path, e))?;
    }
    let path = dir.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(report).expect("report serialises");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::Io(path, e))
}
