//! Run configuration: a TOML file, then `--set section.key=value`
//! overrides, then the dedicated `--seed` / `--out` flags.

use std::path::{Path, PathBuf};

use fracgcl::eval::ProbeConfig;
use fracgcl::graph::PerturbMode;
use fracgcl::io::SynthSpec;
use fracgcl::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Master seed; when set it replaces every per-section seed.
    pub seed: Option<u64>,
    pub data: DataSection,
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub inputs: Inputs,
    pub embed: EmbedSection,
    pub diagnose: DiagnoseSection,
    pub walk: WalkSection,
    pub stability: StabilitySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("out"),
            seed: None,
            data: DataSection::default(),
            synth: SynthSpec::fixture(0),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            inputs: Inputs::default(),
            embed: EmbedSection::default(),
            diagnose: DiagnoseSection::default(),
            walk: WalkSection::default(),
            stability: StabilitySection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Cycle,
    Path,
    Grid,
    Random,
}

/// Where the graph comes from. With nothing set, the `[synth]` block is
/// generated in memory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    /// Graph-only source (no features or labels).
    pub topology: Option<Topology>,
    pub n: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    /// Extra-edge probability for `topology = "random"`.
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// `bank.json` written by `train`.
    pub bank: Option<PathBuf>,
    /// Embedding matrix (`.csv` or `.bin`) written by `embed`.
    pub embedding: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    /// Fixed view weights; tuned on the validation split when absent.
    pub beta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    pub theta: f64,
    pub alpha_l: f64,
    pub alpha_g: f64,
    pub tau: f64,
    pub m: usize,
    /// Feature column used as the theorem signal; a seeded Gaussian signal
    /// is used for graph-only sources.
    pub signal_column: usize,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        DiagnoseSection { theta: 0.9, alpha_l: 0.1, alpha_g: 0.9, tau: 1e3, m: 4, signal_column: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkSection {
    pub alpha: f64,
    pub t_end: f64,
    pub delta_tau: f64,
    pub n_walkers: usize,
    pub start: usize,
    pub seed: u64,
}

impl Default for WalkSection {
    fn default() -> Self {
        WalkSection { alpha: 0.5, t_end: 1.0, delta_tau: 1e-4, n_walkers: 100_000, start: 0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    InitState,
    Forcing,
    Topology,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub alphas: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub perturbation: PerturbKind,
    /// Size of the state or forcing perturbation.
    pub epsilon: f64,
    /// Fraction of edges touched by a topology perturbation.
    pub ratio: f64,
    pub mode: PerturbMode,
    /// Columns of the random initial state.
    pub width: usize,
    pub seed: u64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection {
            alphas: vec![0.3, 0.6, 1.0],
            t_grid: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            perturbation: PerturbKind::InitState,
            epsilon: 1e-2,
            ratio: 0.05,
            mode: PerturbMode::Both,
            width: 4,
            seed: 0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Sets `a.b.c = value` inside a TOML table, parsing `value` as TOML and
/// falling back to a bare string.
fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(format!("override `{assignment}` is not of the form key=value")))?;
    let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| invalid(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>, out: Option<&Path>) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| invalid(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(format!("config: {}", e.message())))?;
        if let Some(s) = seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = out {
            cfg.out_dir = o.to_path_buf();
        }
        if let Some(s) = cfg.seed {
            cfg.synth.seed = s;
            cfg.train.seed = s;
            cfg.probe.seed = s;
            cfg.walk.seed = s;
            cfg.stability.seed = s;
        }
        Ok(cfg)
    }

    /// Input paths that must exist before anything runs.
    pub fn check_paths(&self) -> Result<(), CliError> {
        let d = &self.data;
        let mut paths: Vec<&PathBuf> = [&d.dir, &d.edges, &d.features, &d.labels, &d.splits].into_iter().flatten().collect();
        paths.extend([&self.inputs.bank, &self.inputs.embedding].into_iter().flatten());
        for p in paths {
            if !p.exists() {
                return Err(invalid(format!("path does not exist: {}", p.display())));
            }
        }
        let explicit = [&d.edges, &d.features, &d.labels, &d.splits].iter().filter(|p| p.is_some()).count();
        let sources = usize::from(d.dir.is_some()) + usize::from(explicit > 0) + usize::from(d.topology.is_some());
        if sources > 1 {
            return Err(invalid("data: set only one of `dir`, the four file paths, or `topology`"));
        }
        if explicit != 0 && explicit != 4 {
            return Err(invalid("data: `edges`, `features`, `labels` and `splits` must be given together"));
        }
        Ok(())
    }

    /// SHA-256 of the semantic configuration (everything but `out_dir`).
    pub fn hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.out_dir = PathBuf::new();
        let json = serde_json::to_string(&semantic).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }
}
