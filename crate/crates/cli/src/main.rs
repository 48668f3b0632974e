//! `toothseg`: command-line driver for each pipeline stage and the full run.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use toothseg_core::components::Connectivity;
use toothseg_core::segmenter::PipelineConfig;
use toothseg_core::weaklabels::{DistanceMode, EnergyParams};

#[derive(Debug, Parser)]
#[command(name = "toothseg", version, about = "Coarse-to-fine volumetric tooth segmentation")]
pub struct Cli {
    /// Seed for every random choice (phantom noise, random crops).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-tooth work. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic study: image, ground truth and weak annotations.
    Phantom(PhantomArgs),
    /// Normalize intensities and resample to the coarse grid.
    Preprocess(PreprocessArgs),
    /// Convert weak axial-box annotations into a dense label volume.
    Weak2mask(Weak2maskArgs),
    /// Run a coarse segmenter on a coarse-grid image.
    Coarse(CoarseArgs),
    /// Extract per-tooth crops around coarse labels.
    Roi(RoiArgs),
    /// Run a fine segmenter on crops and stitch the results.
    Fine(FineArgs),
    /// Full run: preprocess, coarse, roi, fine.
    Pipeline(PipelineArgs),
    /// Compare a prediction with ground truth.
    Evaluate(EvaluateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 16)]
    pub teeth: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Voxel counts along z, y, x.
    #[arg(long, num_args = 3, value_names = ["Z", "Y", "X"], default_values_t = [160, 160, 160])]
    pub shape: Vec<usize>,
    #[arg(long, default_value_t = 0.4)]
    pub spacing: f64,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f32,
    /// Full phantom description (JSON) instead of the default jaw layout.
    #[arg(long, conflicts_with_all = ["teeth", "shape", "spacing", "noise"])]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct StageArgs {
    #[arg(long, default_value_t = 1.0)]
    pub coarse_spacing: f64,
    /// RoI margin in millimeters.
    #[arg(long, default_value_t = 3.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.5)]
    pub stitch_threshold: f64,
    /// Lower clipping percentile.
    #[arg(long, default_value_t = 5.0)]
    pub lo: f64,
    /// Upper clipping percentile.
    #[arg(long, default_value_t = 99.5)]
    pub hi: f64,
    #[arg(long, value_enum, default_value_t = Conn::TwentySix)]
    pub connectivity: Conn,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Conn {
    #[value(name = "6")]
    #[serde(rename = "6")]
    Six,
    #[value(name = "26")]
    #[serde(rename = "26")]
    TwentySix,
}

impl StageArgs {
    pub fn config(&self, jobs: usize) -> PipelineConfig {
        PipelineConfig {
            coarse_spacing_mm: self.coarse_spacing,
            margin_mm: self.margin,
            stitch_threshold: self.stitch_threshold,
            lo_pct: self.lo,
            hi_pct: self.hi,
            connectivity: match self.connectivity {
                Conn::Six => Connectivity::Six,
                Conn::TwentySix => Connectivity::TwentySix,
            },
            jobs,
        }
    }
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct EnergyArgs {
    /// Energy slope per millimeter of centerline distance.
    #[arg(long, allow_hyphen_values = true, default_value_t = -100.0)]
    pub k: f64,
    /// Background energy.
    #[arg(long, allow_hyphen_values = true, default_value_t = 300.0)]
    pub tau: f64,
    #[arg(long, value_enum, default_value_t = Distance::Minimum)]
    pub distance: Distance,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Minimum,
    Mean,
}

impl EnergyArgs {
    pub fn params(&self) -> EnergyParams {
        EnergyParams {
            k: self.k,
            background_energy: self.tau,
            distance: match self.distance {
                Distance::Minimum => DistanceMode::Minimum,
                Distance::Mean => DistanceMode::Mean,
            },
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub stage: StageArgs,
    /// Also write a random crop of the normalized coarse image (training-style sample).
    #[arg(long, num_args = 3, value_names = ["Z", "Y", "X"])]
    pub crop: Option<Vec<usize>>,
}

#[derive(Debug, Args, Serialize)]
pub struct Weak2maskArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub ann: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub energy: EnergyArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseKind {
    Oracle,
    Classical,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FineKind {
    Oracle,
    Threshold,
    Upsample,
    External,
}

#[derive(Debug, Args, Serialize)]
pub struct CoarseSegArgs {
    #[arg(long, value_enum, default_value_t = CoarseKind::Classical)]
    pub coarse: CoarseKind,
    /// Directory with class_NN.vjson probabilities (external coarse segmenter).
    #[arg(long)]
    pub coarse_probs: Option<PathBuf>,
    #[command(flatten)]
    pub energy: EnergyArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FineSegArgs {
    #[arg(long, value_enum, default_value_t = FineKind::Threshold)]
    pub fine: FineKind,
    /// Directory with tooth_NN.vjson probabilities (external fine segmenter).
    #[arg(long)]
    pub fine_probs: Option<PathBuf>,
    /// Intensity quantile of the threshold fine segmenter.
    #[arg(long, default_value_t = 0.5)]
    pub quantile: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct CoarseArgs {
    /// Coarse-grid image (as written by `preprocess`).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth labels, required by the oracle segmenter.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub seg: CoarseSegArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RoiArgs {
    /// Coarse labels (as written by `coarse`).
    #[arg(long)]
    pub coarse_labels: PathBuf,
    /// Normalized full-resolution image (as written by `preprocess`).
    #[arg(long)]
    pub image: PathBuf,
    /// Ground truth, cropped alongside as a binary target.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub stage: StageArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FineArgs {
    /// Directory written by `roi`.
    #[arg(long)]
    pub crops: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub seg: FineSegArgs,
    #[command(flatten)]
    pub stage: StageArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground truth, required by oracle segmenters.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub coarse: CoarseSegArgs,
    #[command(flatten)]
    pub fine: FineSegArgs,
    #[command(flatten)]
    pub stage: StageArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Renumber predicted teeth by optimal IoU matching first.
    #[arg(long = "match")]
    pub match_labels: bool,
    /// Directory for report.json and manifest.json; the report is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    match commands::dispatch(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
