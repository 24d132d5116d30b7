use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use layerpot_cli::{run_experiment, RunConfig, RunOptions};

/// Runs an experiment suite from a JSON configuration.
#[derive(Parser, Debug)]
#[command(name = "layerpot", version)]
struct Args {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Report directory, overriding the configuration.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace an existing report.
    #[arg(long)]
    force_overwrite: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let opts = RunOptions { output: args.output, seed: args.seed, force_overwrite: args.force_overwrite };
    let result = RunConfig::load(&args.config).and_then(|c| run_experiment(c, &opts));
    match result {
        Ok(dir) => {
            println!("pass: report in {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("layerpot: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
