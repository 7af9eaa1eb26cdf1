//! `voxstyle` command-line interface.

mod commands;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "voxstyle", version, about = "Style-based 3D GAN toolkit for volumetric images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a seeded phantom dataset as SVL1 volumes plus a JSON sidecar.
    Phantom(PhantomArgs),
    /// Train a generator/discriminator pair.
    Train(TrainArgs),
    /// Sample volumes and middle-slice PGMs from a checkpoint.
    Generate(GenerateArgs),
    /// Project a target volume into latent space.
    Project(ProjectArgs),
    /// Combine coarse styles of one latent with fine styles of another.
    Mix(MixArgs),
    /// Compute bMMD², MS-SSIM diversity and slice-wise FD.
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub count: usize,
    /// Volume extents as DXxDYxDZ.
    #[arg(long, default_value = "20x24x28")]
    pub dims: String,
    /// Ventricle radius range as LO,HI (fractions of the head radius).
    #[arg(long)]
    pub ventricle: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Preset name or path to a key=value configuration file.
    #[arg(long)]
    pub config: String,
    /// Directory of SVL1 training volumes.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint (seed and optimizer settings come from it).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    #[arg(long, default_value_t = 0)]
    pub metrics_every: u64,
    /// Override the minibatch size of the configuration's schedule.
    #[arg(long)]
    pub minibatch: Option<usize>,
    /// Samples per forward pass; gradients are accumulated over chunks.
    #[arg(long)]
    pub chunk: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 10_000.0)]
    pub ema_halflife: f64,
    #[arg(long)]
    pub ema_rampup: Option<f64>,
    /// R1 penalty weight on real data (0 disables it).
    #[arg(long, default_value_t = 0.0)]
    pub r1_gamma: f64,
    #[arg(long)]
    pub pl_weight: Option<f64>,
    #[arg(long)]
    pub pl_interval: Option<u64>,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample from the averaged generator weights.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub use_ema: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// SVL1 volume to reconstruct.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optimize one latent per style layer.
    #[arg(long)]
    pub extended: bool,
    /// Weight of the downsampled MSE term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Weight of the noise autocorrelation penalty (0 disables it).
    #[arg(long, default_value_t = 0.0)]
    pub noise_reg: f64,
    /// Keep noise inputs out of the optimization.
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub use_ema: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct MixArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Seed of the latent feeding the first `cutoff` style layers.
    #[arg(long, default_value_t = 0)]
    pub seed_a: u64,
    /// Seed of the latent feeding the remaining layers.
    #[arg(long, default_value_t = 1)]
    pub seed_b: u64,
    /// Latent record replacing the `--seed-a` latent.
    #[arg(long)]
    pub latent_a: Option<PathBuf>,
    /// Latent record replacing the `--seed-b` latent.
    #[arg(long)]
    pub latent_b: Option<PathBuf>,
    #[arg(long)]
    pub cutoff: usize,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub use_ema: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Sample the generated set from this checkpoint.
    #[arg(long, conflicts_with = "gen_dir")]
    pub ckpt: Option<PathBuf>,
    /// Directory of generated SVL1 volumes.
    #[arg(long)]
    pub gen_dir: Option<PathBuf>,
    #[arg(long)]
    pub real_dir: Option<PathBuf>,
    /// Comma-separated subset of bmmd2, msssim, fid.
    #[arg(long, default_value = "bmmd2,msssim,fid")]
    pub metrics: String,
    /// `all` or a comma-separated subset of sagittal, axial, coronal.
    #[arg(long, default_value = "all")]
    pub plane: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Volumes sampled when evaluating a checkpoint.
    #[arg(long, default_value_t = 64)]
    pub count: usize,
    #[arg(long, default_value_t = 16)]
    pub bmmd2_batch: usize,
    #[arg(long, default_value_t = 10)]
    pub bmmd2_repeats: usize,
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub use_ema: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Phantom(a) => commands::phantom(a),
        Command::Train(a) => commands::train(a),
        Command::Generate(a) => commands::generate(a),
        Command::Project(a) => commands::project(a),
        Command::Mix(a) => commands::mix(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
