use std::path::Path;

use layerpot::hammerstein::ProblemSpec;
use layerpot::symbols::{ParameterSet, ResolutionSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Raw configuration file. Parameters are decoded per command.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(default = "empty_object")]
    pub parameters: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<String>,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid(e.to_string()))
    }

    /// Decodes and validates the parameters for the named command.
    pub fn resolve(&self) -> Result<Command, CliError> {
        let p = self.parameters.clone();
        let bad = |e: serde_json::Error| CliError::ConfigInvalid(format!("{}: {e}", self.command));
        let cmd = match self.command.as_str() {
            "solid-angle" => Command::SolidAngle(serde_json::from_value(p).map_err(bad)?),
            "jump-test" => Command::JumpTest(serde_json::from_value(p).map_err(bad)?),
            "dtn" => Command::Dtn(serde_json::from_value(p).map_err(bad)?),
            "symbols" => Command::Symbols(serde_json::from_value(p).map_err(bad)?),
            "hammerstein-solve" => Command::HammersteinSolve(serde_json::from_value(p).map_err(bad)?),
            "hammerstein-degree" => Command::HammersteinDegree(serde_json::from_value(p).map_err(bad)?),
            "poisson" => Command::Poisson(serde_json::from_value(p).map_err(bad)?),
            "convergence" => Command::Convergence(serde_json::from_value(p).map_err(bad)?),
            other => return Err(CliError::ConfigInvalid(format!("unknown command {other:?}"))),
        };
        cmd.validate()?;
        Ok(cmd)
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Command {
    SolidAngle(SolidAngleParams),
    JumpTest(JumpParams),
    Dtn(DtnParams),
    Symbols(SymbolsParams),
    HammersteinSolve(HammersteinSolveParams),
    HammersteinDegree(HammersteinDegreeParams),
    Poisson(PoissonParams),
    Convergence(ConvergenceParams),
}

impl Command {
    fn validate(&self) -> Result<(), CliError> {
        let level_ok = |l: u32| (0..=5).contains(&l);
        let bad = |s: &str| Err(CliError::ConfigInvalid(s.into()));
        match self {
            Command::SolidAngle(p) if !level_ok(p.level) => bad("level must be in 0..=5"),
            Command::JumpTest(p) if !level_ok(p.level) || p.probes == 0 => bad("level must be in 0..=5 and probes > 0"),
            Command::Dtn(p) if !level_ok(p.level) || p.level == 0 => bad("level must be in 1..=5"),
            Command::Poisson(p) if !level_ok(p.level) || p.grid < 4 => bad("level must be in 0..=5 and grid ≥ 4"),
            Command::Convergence(p) if !level_ok(p.level) || p.grid < 4 || p.schedule.is_empty() => {
                bad("level must be in 0..=5, grid ≥ 4 and the schedule nonempty")
            }
            Command::HammersteinDegree(p) if p.n > 8 => bad("N must be at most 8"),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::SolidAngle(_) => "solid-angle",
            Command::JumpTest(_) => "jump-test",
            Command::Dtn(_) => "dtn",
            Command::Symbols(_) => "symbols",
            Command::HammersteinSolve(_) => "hammerstein-solve",
            Command::HammersteinDegree(_) => "hammerstein-degree",
            Command::Poisson(_) => "poisson",
            Command::Convergence(_) => "convergence",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolidAngleParams {
    pub level: u32,
    pub interior: usize,
    pub exterior: usize,
    pub boundary: usize,
}

impl Default for SolidAngleParams {
    fn default() -> Self {
        Self { level: 3, interior: 10, exterior: 10, boundary: 10 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpParams {
    pub level: u32,
    pub probes: usize,
    pub tolerance: f64,
}

impl Default for JumpParams {
    fn default() -> Self {
        Self { level: 4, probes: 10, tolerance: 0.05 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DtnParams {
    pub level: u32,
}

impl Default for DtnParams {
    fn default() -> Self {
        Self { level: 3 }
    }
}

/// A preset name or an explicit resolution with parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SymbolSource {
    Preset(String),
    Explicit { resolution: ResolutionSpec, parameters: ParameterSet },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolsParams {
    pub spec: SymbolSource,
    #[serde(default)]
    pub expected_det_degree: Option<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HammersteinSolveParams {
    pub problem: ProblemSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub best_effort: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HammersteinDegreeParams {
    pub problem: ProblemSpec,
    #[serde(rename = "N", default)]
    pub n: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    1000
}

fn default_samples() -> usize {
    64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoissonParams {
    pub level: u32,
    pub grid: usize,
    pub tolerance: f64,
}

impl Default for PoissonParams {
    fn default() -> Self {
        Self { level: 3, grid: 16, tolerance: 0.03 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceCase {
    /// ψ₁ ≡ 0 with Dirichlet data z.
    Harmonic,
    /// ψ₁ ≡ 1 with zero Dirichlet data.
    Poisson,
    /// ψ₁ = 1 + (u − u*) with u* = (1 − r²)/6.
    Manufactured,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceParams {
    pub case: ConvergenceCase,
    pub level: u32,
    pub grid: usize,
    /// Mollifier widths in units of the squared grid spacing.
    pub schedule: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub negative_order: u32,
    pub tolerance: f64,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            case: ConvergenceCase::Manufactured,
            level: 3,
            grid: 16,
            schedule: layerpot::solver::DEFAULT_SCHEDULE.to_vec(),
            tol: 1e-9,
            max_iter: 50,
            negative_order: 1,
            tolerance: 0.03,
        }
    }
}
