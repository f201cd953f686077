//! Run configuration shared by command-line flags and `--config` files.
//!
//! Each subcommand's argument struct doubles as its JSON schema. Optional
//! fields fall back to the defaults in `commands`.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use driftlab::FieldDescriptor;
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "driftlab", version, about = "Effective diffusion constants of drifted lattice walks")]
pub struct Cli {
    /// JSON run configuration; replaces the subcommand and its flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Artifact path (stdout when absent).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Maximum number of cached factorizations.
    #[arg(long, global = true)]
    pub cache_max: Option<usize>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// A drift-field descriptor given inline as JSON or as a path to a JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(transparent)]
pub struct FieldArg(pub FieldDescriptor);

impl FromStr for FieldArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = if s.trim_start().starts_with('{') {
            s.to_string()
        } else {
            std::fs::read_to_string(s).map_err(|e| format!("cannot read field file {s}: {e}"))?
        };
        serde_json::from_str(&text)
            .map(FieldArg)
            .map_err(|e| format!("bad field descriptor: {e}"))
    }
}

#[derive(Debug, Clone, Subcommand, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// All exact routes to q(b) for one field (JSON).
    QCompute(QCompute),
    /// Route agreement over seeded random fields (CSV).
    QCompare(QCompare),
    /// Monte Carlo estimate of q(b) (JSON).
    McEstimate(McEstimate),
    /// Second-order mode eigenvalues, largest first (CSV).
    PerturbScan(PerturbScan),
    /// Drift field with q(b) > 1/2d (JSON).
    CounterexampleSearch(CounterexampleSearch),
    /// Symbol-limit errors per eps (CSV).
    SymbolLimit(SymbolLimit),
    /// Homogenization sup-norm errors per eps (CSV).
    Convergence(Convergence),
    /// Lattice Green's function table (CSV).
    GreenTable(GreenTable),
    /// Quadratic-form checks on random inputs (JSON).
    QvCheck(QvCheck),
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QCompute {
    /// Field descriptor: inline JSON or a path to a JSON file.
    #[arg(long)]
    #[serde(default)]
    pub field: Option<FieldArg>,
    /// Torus dimensions, comma separated, used when the descriptor has none.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QCompare {
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    /// Number of random fields.
    #[arg(long)]
    #[serde(default)]
    pub count: Option<u64>,
    /// Amplitude as a fraction of 1/2d.
    #[arg(long)]
    #[serde(default)]
    pub amplitude: Option<f64>,
    /// First seed; fields use seed, seed+1, ...
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McEstimate {
    /// Field descriptor: inline JSON or a path to a JSON file.
    #[arg(long)]
    #[serde(default)]
    pub field: Option<FieldArg>,
    /// Torus dimensions, comma separated, used when the descriptor has none.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(default)]
    pub steps: Option<u64>,
    #[arg(long)]
    #[serde(default)]
    pub paths: Option<u64>,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbScan {
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSearch {
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    /// Starting mode amplitude (absolute); defaults to 0.9/2d.
    #[arg(long)]
    #[serde(default)]
    pub amplitude: Option<f64>,
    /// Run the sign-flip refinement after the mode construction.
    #[arg(long)]
    #[serde(default)]
    pub refine: Option<bool>,
    /// Vertex amplitude for the refinement; defaults to 0.9996/2d.
    #[arg(long)]
    #[serde(default)]
    pub vertex_amplitude: Option<f64>,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolLimit {
    /// Field descriptor: inline JSON or a path to a JSON file.
    #[arg(long)]
    #[serde(default)]
    pub field: Option<FieldArg>,
    /// Torus dimensions, comma separated, used when the descriptor has none.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
    /// Frequency vector xi, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub xi: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convergence {
    /// Field descriptor: inline JSON or a path to a JSON file.
    #[arg(long)]
    #[serde(default)]
    pub field: Option<FieldArg>,
    /// Torus dimensions, comma separated, used when the descriptor has none.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
    /// Gaussian source width.
    #[arg(long)]
    #[serde(default)]
    pub width: Option<f64>,
    /// Gaussian source center, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    /// Truncation and residual tolerance.
    #[arg(long)]
    #[serde(default)]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub max_unknowns: Option<usize>,
    /// Multiplier on q for the homogenized solution (1 = exact).
    #[arg(long)]
    #[serde(default)]
    pub q_scale: Option<f64>,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenTable {
    /// Largest |y| tabulated.
    #[arg(long)]
    #[serde(default)]
    pub ymax: Option<i64>,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QvCheck {
    /// Transverse torus dimensions.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub transverse: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(default)]
    pub count: Option<u64>,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(default)]
    pub cache_max: Option<usize>,
}

/// A parsed `--config` file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub output: Option<PathBuf>,
    pub lattice: LatticeConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut value: Value = serde_json::from_str(text).map_err(CliError::config)?;
        let map = value
            .as_object_mut()
            .ok_or_else(|| CliError::validation("config", "config must be a JSON object"))?;
        let output = match map.remove("output") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(CliError::validation("config", "output must be a string")),
        };
        let lattice = match map.remove("lattice") {
            None => LatticeConfig::default(),
            Some(v) => serde_json::from_value(v).map_err(CliError::config)?,
        };
        let command = serde_json::from_value(value).map_err(CliError::config)?;
        Ok(Self {
            command,
            output,
            lattice,
        })
    }
}
