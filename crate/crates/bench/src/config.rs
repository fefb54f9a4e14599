//! Declarative experiment configuration: flat `key = value` text files plus
//! programmatic construction; command-line flags override file values.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use paradin_core::ModelSpec;
use serde::Serialize;

use crate::norms::NormKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchModel {
    Heat,
    Burgers,
}

impl BenchModel {
    pub fn spec(&self) -> ModelSpec {
        match self {
            BenchModel::Heat => ModelSpec::heat_benchmark(),
            BenchModel::Burgers => ModelSpec::burgers_benchmark(),
        }
    }

    /// Reporting norm used by the reference studies for this model.
    pub fn default_norm(&self) -> NormKind {
        match self {
            BenchModel::Heat => NormKind::Linf,
            BenchModel::Burgers => NormKind::L1,
        }
    }

    /// Space-time coarsening factor used by the reference studies.
    pub fn default_coarsening(&self) -> usize {
        match self {
            BenchModel::Heat => 4,
            BenchModel::Burgers => 3,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BenchModel::Heat => "heat",
            BenchModel::Burgers => "burgers",
        }
    }
}

impl FromStr for BenchModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "heat" => Ok(BenchModel::Heat),
            "burgers" => Ok(BenchModel::Burgers),
            other => Err(format!("unknown model '{other}' (expected heat or burgers)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Sequential,
    Paradin,
    Both,
}

impl FromStr for SolverChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sequential" | "seq" => Ok(SolverChoice::Sequential),
            "paradin" | "parallel" => Ok(SolverChoice::Paradin),
            "both" => Ok(SolverChoice::Both),
            other => Err(format!(
                "unknown solver '{other}' (expected sequential, paradin, or both)"
            )),
        }
    }
}

/// Executor selection for the parallel-in-time runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerChoice {
    /// Serial executor (no pool).
    Serial,
    /// One worker per time level.
    Auto,
    Count(usize),
}

impl WorkerChoice {
    pub fn resolve(&self, nt: usize) -> Option<usize> {
        match self {
            WorkerChoice::Serial => None,
            WorkerChoice::Auto => Some(nt),
            WorkerChoice::Count(n) => Some(*n),
        }
    }
}

impl FromStr for WorkerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "serial" => Ok(WorkerChoice::Serial),
            "auto" => Ok(WorkerChoice::Auto),
            other => other
                .parse::<usize>()
                .map_err(|_| format!("unknown worker count '{other}'"))
                .and_then(|n| {
                    if n == 0 {
                        Err("worker count must be positive".into())
                    } else {
                        Ok(WorkerChoice::Count(n))
                    }
                }),
        }
    }
}

/// How the Newton tolerance is fixed per grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToleranceRule {
    Absolute(f64),
    /// Fraction of the discretization error measured from a tight-tolerance
    /// sequential reference run on the same grid.
    FractionOfReferenceError(f64),
}

impl FromStr for ToleranceRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("tolerance '{s}' must look like frac:0.1 or abs:1e-6"))?;
        let v: f64 = value
            .parse()
            .map_err(|_| format!("bad tolerance value '{value}'"))?;
        match kind.to_ascii_lowercase().as_str() {
            "frac" | "fraction" => {
                if v > 0.0 && v <= 1.0 {
                    Ok(ToleranceRule::FractionOfReferenceError(v))
                } else {
                    Err(format!("tolerance fraction must lie in (0, 1], got {v}"))
                }
            }
            "abs" | "absolute" => {
                if v > 0.0 {
                    Ok(ToleranceRule::Absolute(v))
                } else {
                    Err(format!("absolute tolerance must be positive, got {v}"))
                }
            }
            other => Err(format!("unknown tolerance rule '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Table,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "table" | "txt" => Ok(OutputFormat::Table),
            other => Err(format!(
                "unknown format '{other}' (expected csv, json, or table)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Used in output file names.
    pub label: String,
    pub model: BenchModel,
    /// `(nt, nx, ny)` per study grid.
    pub grids: Vec<(usize, usize, usize)>,
    pub solver: SolverChoice,
    pub workers: WorkerChoice,
    pub coarsening_factor: usize,
    pub preconditioning: bool,
    pub tolerance: ToleranceRule,
    pub norm: NormKind,
    pub format: OutputFormat,
    pub out_dir: Option<PathBuf>,
    /// Best-of-N timing repetitions.
    pub repeats: usize,
}

impl ExperimentConfig {
    pub fn new(model: BenchModel) -> Self {
        ExperimentConfig {
            label: model.label().to_string(),
            model,
            grids: Vec::new(),
            solver: SolverChoice::Both,
            workers: WorkerChoice::Serial,
            coarsening_factor: model.default_coarsening(),
            preconditioning: true,
            tolerance: ToleranceRule::FractionOfReferenceError(0.1),
            norm: model.default_norm(),
            format: OutputFormat::Table,
            out_dir: None,
            repeats: 1,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.grids.is_empty() {
            return Err("no grids configured".into());
        }
        if self.repeats == 0 {
            return Err("repeats must be at least 1".into());
        }
        if self.coarsening_factor < 2 {
            return Err(format!(
                "coarsening factor must be at least 2, got {}",
                self.coarsening_factor
            ));
        }
        Ok(())
    }

    /// Parses a flat `key = value` config body; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut model: Option<BenchModel> = None;
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if key == "model" {
                model = Some(value.parse()?);
            } else {
                pairs.push((key, value));
            }
        }
        let model = model.ok_or("config must set model = heat|burgers")?;
        let mut cfg = ExperimentConfig::new(model);
        for (key, value) in pairs {
            cfg.apply(&key, &value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            cfg.label = stem.to_string();
        }
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "label" => self.label = value.to_string(),
            "grids" => self.grids = parse_grids(value)?,
            "solver" => self.solver = value.parse()?,
            "workers" => self.workers = value.parse()?,
            "cf" | "coarsening" | "coarsening_factor" => {
                self.coarsening_factor = value
                    .parse()
                    .map_err(|_| format!("bad coarsening factor '{value}'"))?;
            }
            "preconditioning" => {
                self.preconditioning = value
                    .parse()
                    .map_err(|_| format!("bad boolean '{value}'"))?;
            }
            "tolerance" => self.tolerance = value.parse()?,
            "norm" => self.norm = value.parse()?,
            "format" => self.format = value.parse()?,
            "out" | "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "repeats" => {
                self.repeats = value.parse().map_err(|_| format!("bad repeats '{value}'"))?;
            }
            other => return Err(format!("unknown config key '{other}'")),
        }
        Ok(())
    }
}

/// Parses `NTxNXxNY` triples separated by commas or whitespace; `NxN` means
/// an `N x N x N` cube.
pub fn parse_grids(value: &str) -> Result<Vec<(usize, usize, usize)>, String> {
    let mut grids = Vec::new();
    for tok in value.split([',', ' ', '\t']).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = tok.split(['x', 'X']).collect();
        let nums: Vec<usize> = parts
            .iter()
            .map(|p| p.parse().map_err(|_| format!("bad grid token '{tok}'")))
            .collect::<Result<_, _>>()?;
        match nums.as_slice() {
            [n] => grids.push((*n, *n, *n)),
            [nt, nx] => grids.push((*nt, *nx, *nx)),
            [nt, nx, ny] => grids.push((*nt, *nx, *ny)),
            _ => return Err(format!("bad grid token '{tok}'")),
        }
    }
    if grids.is_empty() {
        return Err("empty grid list".into());
    }
    Ok(grids)
}
