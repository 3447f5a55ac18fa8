//! `pbgc`: dataset synthesis, VAE training and sampling, distribution metrics,
//! loss-surface sweeps, path extraction and compression cross-evaluation.
//!
//! Exit status is 0 on success, 1 on runtime failure and 2 on usage or
//! validation errors.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::EXIT_USAGE;

/// Environment variable naming the directory for outputs whose `--out` is
/// omitted.
pub const OUT_DIR_ENV: &str = "PBGC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "pbgc",
    version,
    about = "Physics-based generative MIMO channel toolkit"
)]
struct Cli {
    /// Directory for default output paths.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a labeled channel dataset from a scenario.
    Synthesize(SynthesizeArgs),
    /// Train a direct or relaxed VAE on a dataset.
    Train(TrainArgs),
    /// Sample channels from a trained model.
    Generate(GenerateArgs),
    /// Compare two datasets with 2-Wasserstein and MMD.
    Evaluate(EvaluateArgs),
    /// Sweep the single-path loss surface over (aoa, aod).
    Surface(SurfaceArgs),
    /// Read paths off relaxed-model gain matrices.
    ExtractParams(ExtractArgs),
    /// Train one compressor per train set and score it on every test set.
    CrossEval(CrossEvalArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthesizeArgs {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    pub preset: Option<String>,
    /// Antennas per side for presets.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CHNL file [default: <out-dir>/dataset.chnl].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Base configuration (TOML); explicit flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue training this checkpoint for `--epochs` more epochs.
    #[arg(long, conflicts_with = "config")]
    pub resume: Option<PathBuf>,
    /// direct or relaxed [default: relaxed].
    #[arg(long)]
    pub mode: Option<String>,
    /// Dictionary resolution R (relaxed mode).
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Latent dimension Z [default: 64].
    #[arg(long)]
    pub latent: Option<usize>,
    /// Encoder hidden widths, comma separated [default: 512,256].
    #[arg(long, value_delimiter = ',')]
    pub encoder_widths: Option<Vec<usize>>,
    /// Decoder hidden widths, comma separated [default: 256,512].
    #[arg(long, value_delimiter = ',')]
    pub decoder_widths: Option<Vec<usize>>,
    /// KL weight [default: 1e-3].
    #[arg(long)]
    pub alpha_d: Option<f64>,
    /// Gain-matrix L1 weight [default: 1e-4].
    #[arg(long)]
    pub alpha_s: Option<f64>,
    /// Decoded paths in direct mode [default: 1].
    #[arg(long)]
    pub paths: Option<usize>,
    /// [default: 300]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 256]
    #[arg(long)]
    pub batch: Option<usize>,
    /// [default: 1e-3]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dictionary memory budget in bytes.
    #[arg(long, default_value_t = pbgc::dictionary::DEFAULT_MEMORY_BUDGET)]
    pub memory_budget: u64,
    /// Output checkpoint [default: <out-dir>/model.ckpt].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 3000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the gain matrices as CSV, one row per sample (relaxed
    /// mode).
    #[arg(long)]
    pub gains_out: Option<PathBuf>,
    #[arg(long, default_value_t = pbgc::dictionary::DEFAULT_MEMORY_BUDGET)]
    pub memory_budget: u64,
    /// Output CHNL file [default: <out-dir>/generated.chnl].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Any of w2, mmd.
    #[arg(long, value_delimiter = ',', default_value = "w2,mmd")]
    pub metrics: Vec<String>,
    /// Output JSON [default: <out-dir>/evaluate.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SurfaceArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub theta_a: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub theta_d: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    /// Antennas per side.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    #[arg(long, default_value_t = std::f64::consts::PI)]
    pub u: f64,
    /// Relative band for the flatness fraction.
    #[arg(long, default_value_t = pbgc::analysis::DEFAULT_FLATNESS_EPS)]
    pub epsilon: f64,
    /// Keep the uniform axis instead of shifting a node onto the true aoa.
    #[arg(long)]
    pub no_pin: bool,
    /// Output CSV [default: <out-dir>/surface.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    /// Relaxed checkpoint to sample from.
    #[arg(long, conflicts_with = "gains", required_unless_present = "gains")]
    pub model: Option<PathBuf>,
    /// Gain-matrix CSV written by `generate --gains-out`.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    /// Samples to draw with `--model`.
    #[arg(long, default_value_t = 3000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Peaks below this fraction of the largest |gain| are dropped.
    #[arg(long, default_value_t = pbgc::dictionary::DEFAULT_REL_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = pbgc::dictionary::DEFAULT_MEMORY_BUDGET)]
    pub memory_budget: u64,
    /// Output CSV [default: <out-dir>/paths.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CrossEvalArgs {
    /// Training sets as name=path, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub train: Vec<String>,
    /// Test sets as name=path, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub test: Vec<String>,
    #[arg(long, default_value_t = 32)]
    pub bottleneck: usize,
    #[arg(long, value_delimiter = ',', default_value = "256")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Concurrent training jobs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output CSV [default: <out-dir>/cross_eval.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let dir = cli.out_dir;
    let result = match cli.command {
        Command::Synthesize(a) => commands::synthesize(&a, &dir),
        Command::Train(a) => commands::train(&a, &dir),
        Command::Generate(a) => commands::generate(&a, &dir),
        Command::Evaluate(a) => commands::evaluate(&a, &dir),
        Command::Surface(a) => commands::surface(&a, &dir),
        Command::ExtractParams(a) => commands::extract_params(&a, &dir),
        Command::CrossEval(a) => commands::cross_eval(&a, &dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
