mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Audiovisual crowd-counting laboratory.
#[derive(Debug, Parser)]
#[command(name = "avc-lab", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic audiovisual dataset.
    Synth(SynthArgs),
    /// Compute the 96×64 log-mel patch of a WAV file.
    Spectrogram(SpectrogramArgs),
    /// Render the density map of a head-annotation CSV.
    Density(DensityArgs),
    /// Corrupt a PPM image and report its quality.
    Corrupt(CorruptArgs),
    /// Train a model and keep the checkpoint with the best validation MAE.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train audiovisual and vision-only models for each darkening rate R.
    #[command(name = "sweep-r")]
    SweepR(SweepRArgs),
    /// Train audiovisual and vision-only models for each occlusion rate.
    #[command(name = "sweep-occlusion")]
    SweepOcclusion(SweepOcclusionArgs),
    /// Compare backprop against finite differences on a small model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of scenes.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 144)]
    pub height: usize,
    #[arg(long, default_value_t = 1)]
    pub n_min: usize,
    #[arg(long, default_value_t = 40)]
    pub n_max: usize,
    #[arg(long, default_value_t = 2.5)]
    pub blob_radius: f64,
    #[arg(long, default_value_t = 0.9)]
    pub blob_intensity: f64,
    /// Clip RMS of a single person.
    #[arg(long, default_value_t = 0.02)]
    pub rms: f64,
    #[arg(long, default_value_t = 300.0)]
    pub band_lo: f64,
    #[arg(long, default_value_t = 3000.0)]
    pub band_hi: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output tensor file `[1, 96, 64]`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long)]
    pub ann: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    /// Output tensor file `[H, W]`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Darken by R, then add Gaussian noise with random σ bounded by B.
    DarkenNoise,
    /// Gaussian noise with fixed σ.
    Noise,
    /// Black rectangle covering a fraction of the image.
    Occlude,
    /// Downsample by area averaging and upsample back.
    LowRes,
}

/// Corruption flags shared by every command that degrades images.
#[derive(Debug, Clone, Args)]
pub struct CorruptionFlags {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Brightness rate for darken-noise.
    #[arg(long = "R")]
    pub r: Option<f64>,
    /// Noise bound in 0–255 units for darken-noise.
    #[arg(long = "B")]
    pub b: Option<f64>,
    /// Draw the brightness rate as R·U(0,1) instead of using R directly.
    #[arg(long)]
    pub random_r: bool,
    /// Noise σ in 0–1 units for the noise mode.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Occluded area fraction.
    #[arg(long = "or")]
    pub or: Option<f64>,
    #[arg(long)]
    pub lr_width: Option<usize>,
    #[arg(long)]
    pub lr_height: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output PPM; written to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub corruption: CorruptionFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample index mixed into the seed.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    /// Apply blur and luma equalization after corrupting.
    #[arg(long)]
    pub enhance: bool,
    /// BRISQUE linear model file used to score the output.
    #[arg(long)]
    pub brisque_model: Option<PathBuf>,
}

/// Model and optimizer flags shared by training commands.
#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Model config file; defaults to the built-in widths.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    /// Overrides the model config's seed.
    #[arg(long)]
    pub model_seed: Option<u64>,
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.99)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// Shuffling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the corruption streams.
    #[arg(long, default_value_t = 0)]
    pub corrupt_seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory with a manifest.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub vision_only: bool,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub corruption: CorruptionFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Model config the checkpoint was trained with.
    #[arg(long)]
    pub model_config: PathBuf,
    /// Per-sample CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub corrupt_seed: u64,
    #[command(flatten)]
    pub corruption: CorruptionFlags,
}

#[derive(Debug, Args)]
pub struct SweepData {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepRArgs {
    #[command(flatten)]
    pub data: SweepData,
    /// Brightness rates to sweep.
    #[arg(long = "R", value_delimiter = ',', required = true)]
    pub rates: Vec<f64>,
    #[arg(long = "B", default_value_t = 50.0)]
    pub b: f64,
    #[arg(long)]
    pub random_r: bool,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct SweepOcclusionArgs {
    #[command(flatten)]
    pub data: SweepData,
    /// Occlusion rates to sweep.
    #[arg(long = "or", value_delimiter = ',', required = true)]
    pub rates: Vec<f64>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coordinates probed per parameter tensor.
    #[arg(long, default_value_t = 16)]
    pub entries: usize,
    /// Model config; defaults to a narrow desk model.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
}

/// Why a command failed; selects the exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
