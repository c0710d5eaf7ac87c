use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use koopman_family::dmd::DEFAULT_RANK_TOL;
use koopman_family::koopman::DEFAULT_EPSILON_REL;
use koopman_family::linalg::real_matrix;
use koopman_family::systems::{catalog_entry, Harmonic, SpiralBlock, SystemSpec, CATALOG_NAMES};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Where the system comes from: a catalog entry or an inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    Hybrid {
        switch_times: Vec<f64>,
        /// Row-major real matrices, one per segment.
        matrices: Vec<Vec<Vec<f64>>>,
    },
    /// A single 2x2 spiral block on `(x1, x2)`.
    Spiral {
        #[serde(default)]
        sigma: Harmonic,
        omega: Harmonic,
    },
    Catalog {
        name: String,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        overrides: BTreeMap<String, f64>,
    },
}

/// A system ready to simulate or analyse, with the defaults its source
/// supplies.
#[derive(Debug, Clone)]
pub struct ResolvedSystem {
    pub spec: SystemSpec,
    pub x0: Option<Vec<f64>>,
    pub pairs: Vec<(usize, usize)>,
    pub conserved_row: Option<usize>,
}

impl SystemConfig {
    pub fn resolve(&self) -> Result<ResolvedSystem> {
        let invalid = |e: koopman_family::error::Error| CliError::config(format!("system: {e}"));
        match self {
            Self::Hybrid { switch_times, matrices } => {
                let mats = matrices
                    .iter()
                    .enumerate()
                    .map(|(l, rows)| {
                        let n = rows.len();
                        if n == 0 || rows.iter().any(|r| r.len() != n) {
                            return Err(CliError::config(format!(
                                "system.matrices[{l}] must be square and non-empty"
                            )));
                        }
                        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                        Ok(real_matrix(n, n, &flat))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ResolvedSystem {
                    spec: SystemSpec::hybrid(switch_times.clone(), mats).map_err(invalid)?,
                    x0: None,
                    pairs: Vec::new(),
                    conserved_row: None,
                })
            }
            Self::Spiral { sigma, omega } => {
                let block = SpiralBlock {
                    first: 0,
                    second: 1,
                    sigma: *sigma,
                    omega: *omega,
                };
                Ok(ResolvedSystem {
                    spec: SystemSpec::spiral(2, vec![block]).map_err(invalid)?,
                    x0: None,
                    pairs: vec![(0, 1)],
                    conserved_row: None,
                })
            }
            Self::Catalog { name, overrides } => {
                let entry = catalog_entry(name, overrides).map_err(invalid)?;
                Ok(ResolvedSystem {
                    spec: entry.spec,
                    x0: Some(entry.x0),
                    pairs: entry.pairs,
                    conserved_row: entry.conserved_row,
                })
            }
        }
    }

    /// Parses `--system`: inline JSON, a path to a JSON file, or a bare
    /// catalog name.
    pub fn from_arg(arg: &str) -> Result<Self> {
        let trimmed = arg.trim_start();
        if trimmed.starts_with('{') {
            return parse_json(trimmed, "--system");
        }
        let path = Path::new(arg);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            return parse_json(&text, &path.display().to_string());
        }
        if CATALOG_NAMES.contains(&arg) {
            return Ok(Self::Catalog {
                name: arg.to_string(),
                overrides: BTreeMap::new(),
            });
        }
        Err(CliError::config(format!(
            "--system `{arg}` is neither inline JSON, an existing file, nor a catalog name ({})",
            CATALOG_NAMES.join(", ")
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Switch-detecting local least squares.
    #[default]
    Alg1,
    /// Decoupled polar observables.
    Alg2,
    /// Plain DMD on every window, no switch handling.
    DmdMoving,
    /// Exact one-step fundamental matrices (reference run).
    Oracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Alg1 => "alg1",
            Self::Alg2 => "alg2",
            Self::DmdMoving => "dmd-moving",
            Self::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_dt() -> f64 {
    0.01
}

fn default_steps() -> usize {
    1000
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            t0: 0.0,
            dt: default_dt(),
            steps: default_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmParams {
    #[serde(default = "default_epsilon")]
    pub epsilon_rel: f64,
    /// Snapshot pairs per window; algorithm default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stencil: Option<usize>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    /// Polar observable pairs (0-based); the system's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dt_sweep: Vec<f64>,
    /// Stencil centre time for the bias sweep.
    #[serde(default = "default_at")]
    pub at: f64,
    /// Spiral block used by the bias sweep.
    #[serde(default)]
    pub block: usize,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON_REL
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

fn default_at() -> f64 {
    0.5
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            epsilon_rel: default_epsilon(),
            stencil: None,
            rank_tol: default_rank_tol(),
            pairs: None,
            dt_sweep: Vec::new(),
            at: default_at(),
            block: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    /// Primary output; standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals_out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_out: Option<PathBuf>,
}

impl OutputPaths {
    fn all(&self) -> impl Iterator<Item = (&'static str, &PathBuf)> {
        [
            ("out", &self.out),
            ("residuals_out", &self.residuals_out),
            ("report_out", &self.report_out),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.as_ref().map(|p| (k, p)))
    }
}

/// Everything one invocation needs. Serialises to a canonical JSON form
/// that parses back to the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub params: AlgorithmParams,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::config(format!("{source}: {inner}"))
        } else {
            CliError::config(format!("{source}: field `{path}`: {inner}"))
        }
    })?;
    de.end().map_err(|e| CliError::config(format!("{source}: {e}")))?;
    Ok(value)
}

impl RunConfig {
    pub fn new(system: SystemConfig) -> Self {
        Self {
            system,
            grid: GridConfig::default(),
            x0: None,
            algorithm: Algorithm::default(),
            params: AlgorithmParams::default(),
            outputs: OutputPaths::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text, "config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        parse_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !g.t0.is_finite() {
            return Err(CliError::config("grid.t0 must be finite"));
        }
        if !(g.dt > 0.0 && g.dt.is_finite()) {
            return Err(CliError::config(format!("grid.dt must be positive, got {}", g.dt)));
        }
        if let Some(x0) = &self.x0 {
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(CliError::config("x0 entries must be finite"));
            }
        }
        let p = &self.params;
        if !(p.epsilon_rel > 0.0 && p.epsilon_rel.is_finite()) {
            return Err(CliError::config(format!(
                "params.epsilon_rel must be positive, got {}",
                p.epsilon_rel
            )));
        }
        if !(p.rank_tol > 0.0 && p.rank_tol < 1.0) {
            return Err(CliError::config(format!(
                "params.rank_tol must lie in (0, 1), got {}",
                p.rank_tol
            )));
        }
        if p.stencil == Some(0) {
            return Err(CliError::config("params.stencil must be at least 1"));
        }
        if let Some(bad) = p.dt_sweep.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(CliError::config(format!(
                "params.dt_sweep entries must be positive, got {bad}"
            )));
        }
        if !p.at.is_finite() {
            return Err(CliError::config("params.at must be finite"));
        }
        for (key, path) in self.outputs.all() {
            let parent = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            if !parent.is_dir() {
                return Err(CliError::config(format!(
                    "outputs.{key}: directory {} does not exist",
                    parent.display()
                )));
            }
            if path.is_dir() {
                return Err(CliError::config(format!(
                    "outputs.{key}: {} is a directory",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

/// Parses observable pairings such as `(0,1)` or `(0,1);(2,3)`.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, usize)>> {
    let bad = || CliError::config(format!("--pairs `{text}`: expected pairs like (0,1) or (0,1);(2,3)"));
    let mut pairs = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let body = rest.strip_prefix('(').ok_or_else(bad)?;
        let close = body.find(')').ok_or_else(bad)?;
        let (a, b) = body[..close].split_once(',').ok_or_else(bad)?;
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        pairs.push((a, b));
        rest = body[close + 1..].trim_start();
        rest = rest.strip_prefix([';', ',']).unwrap_or(rest).trim_start();
    }
    Ok(pairs)
}
