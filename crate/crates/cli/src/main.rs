//! `fracgcl`: synthesis, training, evaluation and verification harnesses.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
//! failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::commands::Out;
use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<fracgcl::Error> for CliError {
    fn from(e: fracgcl::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

/// Settings come from `--config`, then each `--set`, then `--seed`/`--out`.
#[derive(Parser)]
#[command(name = "fracgcl", version, about = "Fractional-order graph diffusion views for contrastive learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.epochs_n=10` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed; replaces every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Rc,
    Pca,
    Fourier,
    Theorem,
}

impl Which {
    fn name(self) -> &'static str {
        match self {
            Which::Rc => "rc",
            Which::Pca => "pca",
            Which::Fourier => "fourier",
            Which::Theorem => "theorem",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an SBM dataset from `[synth]` into the output directory.
    Synth(Common),
    /// Run AVLA; writes bank.json and train_report.json.
    Train(Common),
    /// Embed nodes with a trained bank; writes embedding.{csv,bin}.
    Embed(Common),
    /// Linear probe on `inputs.embedding` (raw features when unset).
    Probe(Common),
    /// Run AVLA and write the merge log and per-epoch alpha trace.
    AvlaTrace(Common),
    /// Embedding and spectral diagnostics.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        which: Which,
    },
    /// Heavy-tailed random walk vs the fractional diffusion solution.
    Walk(Common),
    /// Perturbation discrepancy curves and the power-law bound.
    Stability(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let (name, common, which) = match &cli.command {
        Command::Synth(c) => ("synth", c, None),
        Command::Train(c) => ("train", c, None),
        Command::Embed(c) => ("embed", c, None),
        Command::Probe(c) => ("probe", c, None),
        Command::AvlaTrace(c) => ("avla-trace", c, None),
        Command::Diagnose { common, which } => ("diagnose", common, Some(*which)),
        Command::Walk(c) => ("walk", c, None),
        Command::Stability(c) => ("stability", c, None),
    };
    let cfg = RunConfig::load(common.config.as_deref(), &common.set, common.seed, common.out.as_deref())?;
    cfg.check_paths()?;
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    let mut out = Out::new(&cfg.out_dir)?;
    let summary = match &cli.command {
        Command::Synth(_) => commands::synth(&cfg, &mut out)?,
        Command::Train(_) => commands::train(&cfg, &mut out)?,
        Command::Embed(_) => commands::embed(&cfg, &mut out)?,
        Command::Probe(_) => commands::probe(&cfg, &mut out)?,
        Command::AvlaTrace(_) => commands::avla_trace(&cfg, &mut out)?,
        Command::Diagnose { which, .. } => commands::diagnose(&cfg, which.name(), &mut out)?,
        Command::Walk(_) => commands::walk(&cfg, &mut out)?,
        Command::Stability(_) => commands::stability(&cfg, &mut out)?,
    };
    let manifest = json!({
        "command": name,
        "which": which.map(Which::name),
        "config_hash": cfg.hash(),
        "seed": cfg.master_seed(),
        "versions": { "fracgcl": env!("CARGO_PKG_VERSION"), "manifest": 1 },
        "started_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "outputs": out.written,
        "config": cfg,
    });
    let manifest_name = match which {
        Some(w) => format!("manifest-{name}-{}.json", w.name()),
        None => format!("manifest-{name}.json"),
    };
    out.json(&manifest_name, &manifest)?;
    println!("{name}: {summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fracgcl: {e}");
            ExitCode::from(match e {
                CliError::Validation(_) => 1,
                CliError::Numerical(_) => 2,
            })
        }
    }
}
