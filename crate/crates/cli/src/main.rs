//! `avis`: synthesize, degrade, restore and benchmark clips from the command
//! line. Every verb writes `manifest.txt` into its `--out-dir` before doing
//! anything else.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use avis_core::{RunMode, TaskKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "avis",
    version,
    about = "Streaming zero-shot video restoration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic clip.
    Synth(SynthArgs),
    /// Apply a degradation operator to a clip.
    Degrade(DegradeArgs),
    /// Restore a degraded clip.
    Restore(RestoreArgs),
    /// Fit the small learned prior on synthetic AR(1) sequences.
    TrainPrior(TrainArgs),
    /// Check the error-propagation bound on coupled trajectories.
    VerifyBound(VerifyArgs),
    /// Compare sampling modes on the same inputs.
    Bench(BenchArgs),
    /// PSNR and SSIM of a restored clip against a reference.
    Metrics(MetricsArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Geometry {
    /// Pixel frames; defaults to 9 (identity codec) or 33 (pool codec).
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
}

#[derive(Args, Debug, Clone)]
pub struct TaskArgs {
    #[arg(long, default_value = "inpaint", value_parser = parse_task)]
    pub task: TaskKind,
    /// Spatial factor for sr4 and stavg.
    #[arg(long, default_value_t = 4, value_parser = positive)]
    pub scale: usize,
    /// Fraction of pixels kept by inpainting.
    #[arg(long, default_value_t = 0.5)]
    pub keep: f64,
    #[arg(long, default_value_t = 0)]
    pub mask_seed: u64,
    /// One mask for all frames instead of a fresh mask per frame.
    #[arg(long)]
    pub shared_mask: bool,
    #[arg(long, default_value_t = 9)]
    pub blur_size: usize,
    #[arg(long, default_value_t = 1.5)]
    pub blur_sigma: f64,
    /// Temporal window for tavg and stavg.
    #[arg(long, default_value_t = 7, value_parser = positive)]
    pub window: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct ArArgs {
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.2)]
    pub sigma_p: f64,
    #[arg(long, default_value_t = 0.5)]
    pub mu0: f64,
}

#[derive(Args, Debug, Clone)]
pub struct CodecArgs {
    #[arg(long, value_enum, default_value_t = CodecChoice::Identity)]
    pub codec: CodecChoice,
    #[arg(long, default_value_t = 2)]
    pub codec_spatial: usize,
    #[arg(long, default_value_t = 4)]
    pub codec_temporal: usize,
}

#[derive(Args, Debug, Clone)]
pub struct SamplerArgs {
    #[arg(long, default_value_t = 0.1, value_parser = parse_t0)]
    pub t0: f64,
    /// Reverse steps K.
    #[arg(long, default_value_t = 2, value_parser = positive)]
    pub steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    pub cg_iters: usize,
    /// Overrides the task's pre-restoration CG budget.
    #[arg(long)]
    pub prerestore_iters: Option<usize>,
    /// Latent frames per chunk.
    #[arg(long, default_value_t = 3, value_parser = positive)]
    pub chunk_len: usize,
    /// Keep only the first N chunks of the input.
    #[arg(long, value_parser = positive)]
    pub chunks: Option<usize>,
    #[arg(long, value_enum, default_value_t = PriorChoice::Gauss)]
    pub prior: PriorChoice,
    /// Learned prior parameter file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CodecChoice {
    Identity,
    Pool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PriorChoice {
    Gauss,
    Learned,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthChoice {
    Blobs,
    GaussAr1,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = SynthChoice::Blobs)]
    pub kind: SynthChoice,
    #[command(flatten)]
    pub geometry: Geometry,
    #[command(flatten)]
    pub ar: ArArgs,
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    #[arg(long, default_value_t = 3, value_parser = positive)]
    pub chunk_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub export_frames: bool,
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Clean clip (.vraw).
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub task: TaskArgs,
}

#[derive(Args, Debug)]
pub struct RestoreArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Measurement (.vraw). Without it a GaussAR clip is synthesized and
    /// degraded first.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Treat `--input` as a clean clip and degrade it before restoring.
    #[arg(long, requires = "input")]
    pub degrade_first: bool,
    /// Clean clip for metrics.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value = "avis", value_parser = parse_mode)]
    pub mode: RunMode,
    /// Period for `flash_periodic` when not given as `flash_periodic:P`.
    #[arg(long, value_parser = positive)]
    pub period: Option<usize>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub codec: CodecArgs,
    #[command(flatten)]
    pub geometry: Geometry,
    #[command(flatten)]
    pub ar: ArArgs,
    /// Seed of the synthesized clip when no input is given.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long)]
    pub export_frames: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 3, value_parser = positive)]
    pub chunk_len: usize,
    /// Chunks per training sequence.
    #[arg(long, default_value_t = 3, value_parser = positive)]
    pub chunks: usize,
    #[arg(long, default_value_t = 32, value_parser = positive)]
    pub sequences: usize,
    #[command(flatten)]
    pub ar: ArArgs,
    #[arg(long, default_value_t = 16, value_parser = positive)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 32, value_parser = positive)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    #[arg(long, default_value_t = 0.1, value_parser = parse_t0)]
    pub t0: f64,
    #[arg(long, default_value_t = 2, value_parser = positive)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = PriorChoice::Gauss)]
    pub prior: PriorChoice,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu0: f64,
    #[arg(long, default_value_t = 4, value_parser = positive)]
    pub max_chunk: usize,
    /// Random probes per empirical Lipschitz estimate (learned prior only).
    #[arg(long, default_value_t = 32, value_parser = positive)]
    pub trials: usize,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "avis,flash,joint", value_parser = parse_mode)]
    pub modes: Vec<RunMode>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub task: BenchTask,
    #[command(flatten)]
    pub codec: CodecArgs,
    #[command(flatten)]
    pub geometry: Geometry,
    #[command(flatten)]
    pub ar: ArArgs,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

/// Same knobs as [`TaskArgs`] but defaulting to super-resolution.
#[derive(Args, Debug, Clone)]
pub struct BenchTask {
    #[arg(long, default_value = "sr4", value_parser = parse_task)]
    pub task: TaskKind,
    #[arg(long, default_value_t = 4, value_parser = positive)]
    pub scale: usize,
    #[arg(long, default_value_t = 0.5)]
    pub keep: f64,
    #[arg(long, default_value_t = 0)]
    pub mask_seed: u64,
    #[arg(long)]
    pub shared_mask: bool,
    #[arg(long, default_value_t = 9)]
    pub blur_size: usize,
    #[arg(long, default_value_t = 1.5)]
    pub blur_sigma: f64,
    #[arg(long, default_value_t = 7, value_parser = positive)]
    pub window: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
}

impl From<BenchTask> for TaskArgs {
    fn from(b: BenchTask) -> Self {
        TaskArgs {
            task: b.task,
            scale: b.scale,
            keep: b.keep,
            mask_seed: b.mask_seed,
            shared_mask: b.shared_mask,
            blur_size: b.blur_size,
            blur_sigma: b.blur_sigma,
            window: b.window,
            noise_sigma: b.noise_sigma,
            noise_seed: b.noise_seed,
        }
    }
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub restored: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Label for the CSV row.
    #[arg(long, default_value = "clip")]
    pub video: String,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_t0(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if t > 0.0 && t <= 1.0 {
        Ok(t)
    } else {
        Err(format!("t0 = {s} must lie in (0, 1]"))
    }
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    s.parse().map_err(|e: avis_core::Error| e.to_string())
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: avis_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Degrade(a) => commands::degrade(a),
        Command::Restore(a) => commands::restore(a),
        Command::TrainPrior(a) => commands::train_prior(a),
        Command::VerifyBound(a) => commands::verify_bound(a),
        Command::Bench(a) => commands::bench(a),
        Command::Metrics(a) => commands::metrics(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
