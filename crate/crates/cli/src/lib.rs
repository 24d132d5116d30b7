//! Configuration-driven experiment runner.

pub mod config;
pub mod report;
mod suites;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{Command, RunConfig};
pub use report::{Check, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("refusing to overwrite {0} (pass --force-overwrite)")]
    WouldOverwrite(PathBuf),
    #[error("{0}")]
    Computation(String),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("suite failed: {0}")]
    SuiteFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) | CliError::WouldOverwrite(_) => 2,
            _ => 1,
        }
    }
}

/// Overrides applied on top of the configuration file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force_overwrite: bool,
}

/// Runs a suite and writes its report. Returns the report directory; a suite
/// whose checks fail still writes its report and then yields `SuiteFailed`.
pub fn run_experiment(mut config: RunConfig, opts: &RunOptions) -> Result<PathBuf, CliError> {
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    let dir = match (&opts.output, &config.output_path) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => return Err(CliError::ConfigInvalid("no output path given".into())),
    };
    config.output_path = Some(dir.display().to_string());
    let cmd = config.resolve()?;
    report::prepare_output(&dir, opts.force_overwrite)?;

    let out = suites::run(&cmd, config.seed)?;
    let pass = out.checks.iter().all(|c| c.pass);
    let resolved = serde_json::json!({
        "command": cmd.name(),
        "parameters": cmd,
        "seed": config.seed,
        "output_path": config.output_path,
    });
    let generated_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let rep = Report {
        tool: "layerpot",
        version: env!("CARGO_PKG_VERSION"),
        command: cmd.name(),
        seed: config.seed,
        config: resolved,
        results: &out.results,
        checks: &out.checks,
        tables: out.tables.iter().map(|t| format!("{}.csv", t.name)).collect(),
        pass,
        generated_unix,
    };
    report::write_report(&dir, &rep, &out.tables)?;
    if !pass {
        let failed: Vec<&str> = out.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(CliError::SuiteFailed(failed.join(", ")));
    }
    Ok(dir)
}
