use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use csi_imager::clloop::{DEFAULT_PSNR_TH_DB, DEFAULT_SSIM_TH};
use csi_imager::ingest::{DEFAULT_LOWPASS_W, DEFAULT_WINDOW_LEN};
use csi_imager::model::{HyperParams, PRETRAIN_EPOCHS, UPDATE_EPOCHS};
use csi_imager::sim::{DEFAULT_CSI_RATE_HZ, DEFAULT_FRAME_RATE_FPS};

const DEFAULT_RESOLUTION: usize = csi_imager::sim::DEFAULT_RENDER_RES.0;
const DEFAULT_IMAGE_SIZE: usize = csi_imager::ingest::DEFAULT_IMAGE_SIZE.0;
pub const DEFAULT_SLOT_S: f64 = 60.0;

#[derive(Debug, Parser)]
#[command(name = "csi-imager", version, about = "Simulate, train, and continually adapt a CSI-to-image model")]
#[command(after_help = "Values in --config FILE are read from the table named after the subcommand, \
with keys equal to flag names (e.g. [pretrain] epochs = 20). \
Precedence: command-line flags, then the config file, then built-in defaults.")]
pub struct Cli {
    /// TOML file with per-subcommand defaults
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic capture (CSI records plus camera frames)
    Simulate(SimulateArgs),
    /// Train a fresh model on a dataset, holding out the last 10% by time
    Pretrain(PretrainArgs),
    /// Run threshold-gated continual learning over datasets in order
    RunCl(RunClArgs),
    /// Score a model on a dataset without updating it
    Evaluate(EvaluateArgs),
    /// Merge run-cl reports into one tidy CSV
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Preset: office, s1, s2, s3, s4, s5, s6
    #[arg(long, default_value = "office")]
    pub scenario: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
    /// Override the preset duration in seconds
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CSI_RATE_HZ)]
    pub csi_hz: f64,
    #[arg(long, default_value_t = DEFAULT_FRAME_RATE_FPS)]
    pub fps: f64,
    /// Side of the square rendered frames in pixels
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: usize,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// CSI samples per window
    #[arg(long, default_value_t = DEFAULT_WINDOW_LEN)]
    pub window_len: usize,
    /// Moving-average lowpass width in samples
    #[arg(long, default_value_t = DEFAULT_LOWPASS_W)]
    pub lowpass_w: usize,
    /// Side of the square output image
    #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE)]
    pub image_size: usize,
}

fn default_hyper() -> HyperParams {
    HyperParams::default()
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = default_hyper().d_model)]
    pub d_model: usize,
    #[arg(long, default_value_t = default_hyper().n_heads)]
    pub heads: usize,
    #[arg(long, default_value_t = default_hyper().n_layers)]
    pub layers: usize,
    #[arg(long, default_value_t = default_hyper().d_ffn)]
    pub d_ffn: usize,
    /// Side of the decoder's starting grid
    #[arg(long, default_value_t = default_hyper().seed_grid)]
    pub seed_grid: usize,
    /// Decoder feature channels
    #[arg(long, default_value_t = default_hyper().base_ch)]
    pub base_ch: usize,
    #[arg(long, default_value_t = default_hyper().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = default_hyper().momentum)]
    pub momentum: f64,
    #[arg(long, default_value_t = default_hyper().batch_size)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PretrainArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Output model file
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = PRETRAIN_EPOCHS)]
    pub epochs: usize,
    /// Seeds weight init and batch shuffling
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunClArgs {
    /// Pretrained model file
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory; repeat to chain scenarios in order
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    /// Slot length in seconds
    #[arg(long, default_value_t = DEFAULT_SLOT_S)]
    pub slot_s: f64,
    /// Update when mean SSIM is below this (accepts -inf / inf)
    #[arg(long, default_value_t = DEFAULT_SSIM_TH, allow_hyphen_values = true)]
    pub ssim_th: f64,
    /// Update when mean PSNR in dB is below this (accepts -inf / inf)
    #[arg(long, default_value_t = DEFAULT_PSNR_TH_DB, allow_hyphen_values = true)]
    pub psnr_th: f64,
    #[arg(long, default_value_t = UPDATE_EPOCHS)]
    pub epochs_per_update: usize,
    /// Seeds batch shuffling during updates
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Moving-average lowpass width in samples
    #[arg(long, default_value_t = DEFAULT_LOWPASS_W)]
    pub lowpass_w: usize,
    /// Per-slot report CSV
    #[arg(long)]
    pub report: PathBuf,
    /// Where to save the final model
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    /// Directory for per-slot predicted/truth PPM images
    #[arg(long)]
    pub dump_frames: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    All,
    Train,
    Val,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which pairs to score; train/val follow the pretrain holdout
    #[arg(long, value_enum, default_value_t = Split::All)]
    pub split: Split,
    /// Moving-average lowpass width in samples
    #[arg(long, default_value_t = DEFAULT_LOWPASS_W)]
    pub lowpass_w: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// run-cl report CSVs; each becomes one run
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}
