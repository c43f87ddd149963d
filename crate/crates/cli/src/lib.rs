//! Command-line driver: synthetic data generation, training, evaluation,
//! bucket splitting and embedding-distance analysis, all driven by one TOML
//! config.

pub mod artifacts;
pub mod commands;
pub mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "stem", version, about = "Multi-task recommender experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    GenData,
    Train,
    Eval,
    BucketSplit,
    Analyze,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic train/val/test CSVs.
    GenData(CommonArgs),
    /// Train a model (or a learning-rate grid) and save the best checkpoint.
    Train(CommonArgs),
    /// Score a checkpoint: metrics, MTL gain and per-subset AUC.
    Eval(CommonArgs),
    /// Assign test samples to subsets from two single-task references.
    BucketSplit(CommonArgs),
    /// Histogram embedding distances of contradictory user-item pairs.
    Analyze(CommonArgs),
}

impl Command {
    pub fn parts(&self) -> (CommandKind, &CommonArgs) {
        match self {
            Command::GenData(a) => (CommandKind::GenData, a),
            Command::Train(a) => (CommandKind::Train, a),
            Command::Eval(a) => (CommandKind::Eval, a),
            Command::BucketSplit(a) => (CommandKind::BucketSplit, a),
            Command::Analyze(a) => (CommandKind::Analyze, a),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed`; for gen-data also the generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

/// Applies command-line overrides to a loaded config.
pub fn resolve(kind: CommandKind, args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        if kind == CommandKind::GenData {
            if let Some(s) = cfg.data.synthetic.as_mut() {
                s.seed = seed;
            }
        }
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run_command(kind: CommandKind, cfg: &RunConfig, force: bool) -> Result<()> {
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Config("no output directory: set out_dir or pass --out".into()))?;
    artifacts::prepare_out_dir(&out, force)?;
    let mut cfg = cfg.clone();
    cfg.out_dir = Some(out.clone());
    match kind {
        CommandKind::GenData => commands::gen_data(&cfg, &out),
        CommandKind::Train => commands::train(&cfg, &out),
        CommandKind::Eval => commands::eval(&cfg, &out),
        CommandKind::BucketSplit => commands::bucket_split(&cfg, &out),
        CommandKind::Analyze => commands::analyze(&cfg, &out),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let (kind, args) = cli.command.parts();
    let cfg = resolve(kind, args)?;
    run_command(kind, &cfg, args.force)
}
