//! banditlab command line: generate synthetic corpora, replay policies over
//! augmented datasets, render reports, and run the built-in self test.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 data error,
//! 4 runtime error.

mod config;
mod generate;
mod outputs;
mod replay_cmd;
mod report;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use banditlab_core::experiment::ExperimentError;
use banditlab_core::io::DataError;
use banditlab_core::synthenv::GeneratorError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::BadPlan(msg) => CliError::Config(msg),
            ExperimentError::NoSessions | ExperimentError::TooFewImages(_) => {
                CliError::Data(e.to_string())
            }
            ExperimentError::Context(_) => CliError::Data(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "banditlab",
    version,
    about = "Offline laboratory for contextual bandits with human intuitions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic session corpus (sessions.jsonl + features.csv).
    Generate(GenerateArgs),
    /// Replay all selected policies over n augmented replications.
    Replay(ReplayArgs),
    /// Render curve files and an accuracy table from replay results.
    Report(ReportArgs),
    /// Run the built-in invariant suite.
    Selftest,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Output directory for sessions.jsonl, features.csv and the manifest.
    #[arg(long, default_value = "data")]
    pub out: PathBuf,

    /// Number of sessions to generate.
    #[arg(long, default_value_t = 515)]
    pub sessions: usize,

    /// Master seed for the generator.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Number of arms (candidate diseases).
    #[arg(long, default_value_t = 5)]
    pub arms: usize,

    /// Class priors, comma separated; must have one entry per arm.
    #[arg(long, value_delimiter = ',')]
    pub priors: Option<Vec<f64>>,

    /// Dimension of the image feature vectors.
    #[arg(long, default_value_t = 64)]
    pub feature_dim: usize,

    /// Scale of the per-class prototype vectors.
    #[arg(long, default_value_t = 1.0)]
    pub prototype_scale: f64,

    /// Per-coordinate noise sigma of the image features (sigma_x).
    #[arg(long, default_value_t = 1.2)]
    pub feature_noise: f64,

    /// P(confounder active) per session.
    #[arg(long, default_value_t = 0.57)]
    pub confounder_prior: f64,

    /// Intuition accuracy when the confounder is active (p1).
    #[arg(long, default_value_t = 0.50)]
    pub p1: f64,

    /// Intuition accuracy when the confounder is inactive (p0).
    #[arg(long, default_value_t = 0.20)]
    pub p0: f64,

    /// Images per disease pool.
    #[arg(long, default_value_t = 30)]
    pub images_per_disease: usize,

    /// Minimum clicks per session.
    #[arg(long, default_value_t = 3)]
    pub clicks_min: usize,

    /// Maximum clicks per session.
    #[arg(long, default_value_t = 8)]
    pub clicks_max: usize,

    /// P(a click is pulled by the true symptoms) when the confounder is
    /// inactive; undirected clicks spread over the confusable group.
    #[arg(long, default_value_t = 0.05)]
    pub click_base: f64,

    /// Added to click-base when the confounder is active.
    #[arg(long, default_value_t = 0.2)]
    pub click_boost: f64,

    /// P(a click is pulled by the user's belief pool).
    #[arg(long, default_value_t = 0.35)]
    pub belief_pull: f64,

    /// Size of the visually-confusable disease groups (1 = no structure).
    #[arg(long, default_value_t = 3)]
    pub confusion_group: usize,

    /// Zipf exponent of within-pool image popularity (0 = uniform).
    #[arg(long, default_value_t = 1.0)]
    pub popularity_skew: f64,
}

#[derive(Args, Default)]
pub struct ReplayArgs {
    /// TOML config file; command-line flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Path to sessions.jsonl.
    #[arg(long)]
    pub sessions: Option<PathBuf>,

    /// Path to features.csv.
    #[arg(long)]
    pub features: Option<PathBuf>,

    /// Output directory (flag beats the BANDITLAB_OUT env var beats config).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Context type: imgctx, simctx, or both.
    #[arg(long)]
    pub context: Option<String>,

    /// Policies to replay, comma separated (cfts,ts,extts,obs,zeror).
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<String>>,

    /// Replicas per session in the augmentation step (r).
    #[arg(long)]
    pub replicas: Option<usize>,

    /// Per-image dropout probability (d).
    #[arg(long)]
    pub p_drop: Option<f64>,

    /// Number of independent replications (n).
    #[arg(long)]
    pub runs: Option<usize>,

    /// Accuracy cutoffs, comma separated; the horizon is the largest.
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,

    /// Master seed (mandatory here or in the config file).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Sampling covariance multiplier for the Thompson policies.
    #[arg(long)]
    pub variance_scale: Option<f64>,

    /// Cap on the PCA dimension of both context types.
    #[arg(long)]
    pub pca_components: Option<usize>,

    /// Worker threads for the run pool (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Directory holding summary.csv, pvalues.csv and runs/.
    #[arg(long)]
    pub results: PathBuf,

    /// Where to write the report files (default: the results directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => generate::run(&args),
        Command::Replay(args) => replay_cmd::run(&args),
        Command::Report(args) => report::run(&args),
        Command::Selftest => selftest::run(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
