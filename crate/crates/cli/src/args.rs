use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use flowprint::features::MadMode;

#[derive(Debug, Parser)]
#[command(
    name = "flowprint",
    version,
    about = "Fingerprint smartphone apps from encrypted traffic metadata"
)]
pub struct Cli {
    /// Seed for every random choice; defaults to the config file value or 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// error, warn, info, debug or trace. FLOWPRINT_LOG takes precedence.
    #[arg(long, global = true)]
    pub log_level: Option<String>,

    /// TOML file with defaults for any of the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset.
    Simulate(SimulateArgs),
    /// Parse, clean and sessionize a dataset and list its flows.
    Ingest(IngestArgs),
    /// Write the 54-feature matrix of a dataset as CSV.
    Featurize(FeaturizeArgs),
    /// Train a reinforced classifier on a dataset.
    Train(TrainArgs),
    /// Classify every flow of a packet log.
    Classify(ClassifyArgs),
    /// Run an experiment spec and write its report and sweep.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON generator config with library archetypes and app profiles.
    #[arg(
        long,
        conflicts_with = "benchmark_apps",
        required_unless_present = "benchmark_apps"
    )]
    pub profiles: Option<PathBuf>,

    /// Use the built-in benchmark profiles for this many apps.
    #[arg(long)]
    pub benchmark_apps: Option<usize>,

    /// Share of flows drawn from library archetypes (benchmark profiles only).
    #[arg(long, default_value_t = 0.3, value_parser = unit_interval)]
    pub shared_fraction: f64,

    #[arg(long)]
    pub traces_per_app: Option<usize>,

    /// Length-mean drift applied to the paired dataset.
    #[arg(long)]
    pub drift: Option<f64>,

    #[arg(long)]
    pub out: PathBuf,

    /// Also write an independently drawn dataset here.
    #[arg(long)]
    pub pair_out: Option<PathBuf>,

    /// Seed of the paired dataset; defaults to seed + 1.
    #[arg(long, requires = "pair_out")]
    pub pair_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// Inter-packet gap in seconds that ends a burst.
    #[arg(long)]
    pub burst_threshold: Option<f64>,

    #[arg(long)]
    pub mad_mode: Option<MadMode>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,

    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub burst_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub n_trees: Option<usize>,

    /// Minimum importance a feature must exceed to be kept.
    #[arg(long)]
    pub selection_threshold: Option<f64>,

    /// Share of training flows used for the preliminary stage.
    #[arg(long)]
    pub split_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,

    #[arg(long)]
    pub model: PathBuf,

    /// Relabel report; defaults to the model path with a `.relabel.json` extension.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Also save the preliminary-stage pipeline.
    #[arg(long)]
    pub preliminary_model: Option<PathBuf>,

    /// Timestamp recorded in the model metadata. Left out by default so
    /// repeated runs give identical files.
    #[arg(long)]
    pub created_at: Option<String>,

    #[command(flatten)]
    pub session: SessionArgs,

    #[command(flatten)]
    pub learn: LearnArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Packet log (.jsonl or .csv).
    #[arg(long)]
    pub log: PathBuf,

    /// Minimum confidence to accept a prediction; defaults to 0.5.
    #[arg(long, value_parser = unit_interval)]
    pub threshold: Option<f64>,

    #[arg(long)]
    pub burst_threshold: Option<f64>,

    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// JSON experiment spec.
    #[arg(long)]
    pub spec: PathBuf,

    /// Receives report.json and sweep.csv.
    #[arg(long)]
    pub out_dir: PathBuf,

    #[command(flatten)]
    pub session: SessionArgs,

    #[command(flatten)]
    pub learn: LearnArgs,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}
