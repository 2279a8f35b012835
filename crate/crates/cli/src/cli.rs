//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "carotid",
    version,
    about = "Freehand 3D carotid ultrasound pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a phantom sweep with tracked (noisy) poses.
    Simulate(SimulateArgs),
    /// Re-rank and denoise a pose file.
    Regularize(RegularizeArgs),
    /// Build a voxel volume from frames or masks and poses.
    Reconstruct(ReconstructArgs),
    /// Resample longitudinal images along the vessel centreline.
    Cut(CutArgs),
    /// Stenosis grade, plaque size and diagnosis of a label volume.
    Measure(MeasureArgs),
    /// Segmentation, agreement and diagnostic metrics.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Phantom spec (JSON); built-in defaults when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Per-axis translation noise of the tracked poses, mm.
    #[arg(long, default_value_t = 0.5)]
    pub sigma_trans: f64,
    /// Per-axis rotation noise of the tracked poses, radians.
    #[arg(long, default_value_t = 0.005)]
    pub sigma_rot: f64,
    /// First frame of a reversed (backward-motion) run.
    #[arg(long)]
    pub fallback_start: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub fallback_len: usize,
    /// Seed for pose and pixel noise; overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RegularizeArgs {
    #[arg(long)]
    pub poses: PathBuf,
    /// Per-frame vessel centroids, needed for --rerank.
    #[arg(long)]
    pub centroids: Option<PathBuf>,
    /// Weight of the total-variation prior; 0 disables denoising.
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 200)]
    pub cycles: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda0: f64,
    /// Restore sweep order from centroid projections first.
    #[arg(long)]
    pub rerank: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconMode {
    Intensity,
    Label,
}

#[derive(Debug, Args, Serialize)]
pub struct ReconstructArgs {
    /// Directory of frame or mask PGMs with a sequence.json.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub poses: PathBuf,
    /// Voxel size, mm.
    #[arg(long, default_value_t = 0.2)]
    pub voxel: f64,
    #[arg(long, value_enum, default_value_t = ReconMode::Intensity)]
    pub mode: ReconMode,
    /// Stack frames by centre position only, ignoring orientation.
    #[arg(long)]
    pub pseudo: bool,
    /// Hole-filling radius, voxels.
    #[arg(long, default_value_t = 3)]
    pub hole_radius: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CutArgs {
    /// Intensity volume (volume.json or its directory).
    #[arg(long)]
    pub volume: PathBuf,
    /// Label volume on the same grid.
    #[arg(long)]
    pub labels: PathBuf,
    /// Comma-separated angles from the y-axis, degrees in [-90, 90).
    #[arg(long, default_value = "0,15,-15,30,-30", allow_hyphen_values = true)]
    pub angles: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MeasureArgs {
    /// Label volume (volume.json or its directory).
    #[arg(long)]
    pub labels: PathBuf,
    /// Wall thickness marking a plaque slice, mm.
    #[arg(long, default_value_t = 1.5)]
    pub threshold: f64,
    /// Consecutive plaque slices that make the scan diseased.
    #[arg(long, default_value_t = 5)]
    pub run_length: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvaluateCommand {
    /// DSC and HD95 between two directories of mask PGMs.
    Masks(EvalMasksArgs),
    /// MAD and Pearson correlation of a two-column CSV.
    Series(EvalSeriesArgs),
    /// Sensitivity, specificity and accuracy from counts.
    Counts(EvalCountsArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EvalMasksArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalSeriesArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalCountsArgs {
    #[arg(long)]
    pub tp: u64,
    #[arg(long = "fn")]
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[arg(long)]
    pub fp: u64,
    #[arg(long)]
    pub tn: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}
