//! `dressswap`: synthesize, import, train, detect and swap from the shell.
//!
//! Failures exit with status 1 and print one JSON line to stderr:
//! `{"error": "...", "kind": "..."}`. Usage errors exit with status 2.

mod commands;
mod landmark_file;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dressswap::Error),
    #[error("{path}: {message}")]
    Landmarks { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Landmarks { .. } => "landmarks",
            CliError::Invalid(_) => "argument",
        }
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "dressswap", version, about = "Garment landmark detection and dress swapping")]
pub struct Cli {
    /// Seed for synthesis, data split, initialization and batch order.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Require bit-reproducible results. Every kernel is single-threaded
    /// with a fixed reduction order, so this only gets recorded.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Render synthetic garment images and their manifest.
    Synth(SynthArgs),
    /// Convert a positional annotation file into a manifest.
    Import(ImportArgs),
    /// Keep full-body samples whose eight landmarks are all visible.
    Filter(FilterArgs),
    /// Train the landmark regressor.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Predict the landmarks of one image.
    Detect(DetectArgs),
    /// Paste the source garment onto the destination garment region.
    Swap(SwapArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    /// Receives `images/` and `manifest.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory the annotation image names are relative to.
    #[arg(long)]
    pub images: PathBuf,
    /// JSON layout file, or a preset: `plain` (default) or `benchmark`.
    #[arg(long)]
    pub layout: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionArg {
    /// f32 convolution products, f64 everywhere else.
    Mixed,
    /// f64 throughout.
    F64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.85)]
    pub split: f64,
    #[arg(long, value_enum, default_value_t = OptimizerKind::Adam)]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// SGD momentum; ignored by Adam.
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Mixed)]
    pub precision: PrecisionArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// PNG copy of the input with the landmarks drawn on.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SwapArgs {
    #[arg(long)]
    pub source_image: PathBuf,
    #[arg(long)]
    pub source_landmarks: PathBuf,
    #[arg(long)]
    pub dest_image: PathBuf,
    #[arg(long)]
    pub dest_landmarks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    info!("config {}", serde_json::to_string(&cli).expect("config serializes"));
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.to_string(), "kind": e.kind() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
