//! `fisheye3d` batch commands.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
//! Errors are reported on stderr as one JSON line.

mod commands;
mod error;

use clap::{Args, Parser, Subcommand, ValueEnum};
use error::CliError;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "fisheye3d", version, about = "Fisheye rectification, lift-splat, detection metrics and synthetic data")]
pub struct Cli {
    /// Worker threads; 0 uses one per core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a seeded synthetic dataset (images, manifest, calibration).
    Synth(SynthArgs),
    /// Resample fisheye images into a perspective, cylindrical or equirectangular view.
    Rectify(RectifyArgs),
    /// Lift one frame onto depth shells and splat it onto a BEV grid.
    Liftsplat(LiftsplatArgs),
    /// Score predictions against ground truth (AP, TP errors, FDS).
    Eval(EvalArgs),
    /// Fisheye/pinhole footprint ratios against distance with a LOWESS fit.
    Compression(CompressionArgs),
    /// Composite score from mAP and the three TP errors.
    Fds(FdsArgs),
    /// Seeded noisy predictions from a manifest's annotations.
    Perturb(PerturbArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    #[value(name = "surround-4f")]
    Surround4f,
    #[value(name = "surround-6p")]
    Surround6p,
    #[value(name = "front-rear-2f")]
    FrontRear2f,
    #[value(name = "left-right-2f")]
    LeftRight2f,
    #[value(name = "sides-4p")]
    Sides4p,
    Combined,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, default_value_t = 8)]
    pub objects: usize,
    #[arg(long, value_enum, default_value_t = Layout::Combined)]
    pub rig: Layout,
    /// Image size multiplier (1 = 800x800 fisheye, 1280x720 pinhole).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Samples per pixel along each axis.
    #[arg(long, default_value_t = 2)]
    pub supersample: u32,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Perspective,
    Cylindrical,
    Equirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Interp {
    Bilinear,
    Nearest,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Target view type.
    #[arg(long, value_enum, default_value_t = Mode::Perspective)]
    pub mode: Mode,
    #[arg(long, default_value_t = 400)]
    pub height: usize,
    #[arg(long, default_value_t = 400)]
    pub width: usize,
    /// Horizontal field of view in degrees [default: 90 perspective, 180 otherwise].
    #[arg(long)]
    pub fov: Option<f64>,
    /// Vertical field of view in degrees for cylindrical and equirect [default: 100 cylindrical, 180 equirect].
    #[arg(long)]
    pub vfov: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RectifyArgs {
    /// Dataset manifest (every frame is rectified) or a single PNG image.
    #[arg(long)]
    pub input: PathBuf,
    /// Rig calibration JSON; required when --input is an image.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Camera id within the rig.
    #[arg(long)]
    pub camera: String,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Interp::Bilinear)]
    pub interp: Interp,
    /// Output directory for a manifest input, PNG path for an image input.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LiftsplatArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Frame id [default: first frame].
    #[arg(long)]
    pub frame: Option<String>,
    /// Comma-separated camera ids [default: every fisheye of the rig].
    #[arg(long, value_delimiter = ',')]
    pub camera_set: Vec<String>,
    /// Per-pixel view grid the image is resampled into before lifting.
    #[arg(long, value_enum, default_value_t = Mode::Equirect)]
    pub grid: Mode,
    #[arg(long, default_value_t = 64)]
    pub grid_height: usize,
    #[arg(long, default_value_t = 64)]
    pub grid_width: usize,
    /// Horizontal grid field of view in degrees [default: 90 perspective, 180 otherwise].
    #[arg(long)]
    pub fov: Option<f64>,
    /// Depth shells as R_MIN:R_MAX:BINS[:uniform|quadratic].
    #[arg(long, default_value = "1:68:67:uniform")]
    pub binning: String,
    /// BEV raster as HALF_EXTENT:CELL_SIZE in meters.
    #[arg(long, default_value = "48:0.8")]
    pub bev_size: String,
    /// Height gate as Z_MIN:Z_MAX in meters.
    #[arg(long, default_value = "-5:5")]
    pub z_range: String,
    /// JSON object mapping camera id to {"height", "width", "depth", "data"}
    /// logits (row-major, depth fastest) [default: uniform depth].
    #[arg(long)]
    pub logits: Option<PathBuf>,
    /// Output directory (bev.csv, bev.png, summary.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApModeArg {
    Nuscenes,
    Trapezoid,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest holding the ground-truth annotations.
    #[arg(long)]
    pub gt: PathBuf,
    /// Predictions JSON.
    #[arg(long)]
    pub pred: PathBuf,
    /// Evaluation config JSON; individual flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated center-distance thresholds in meters.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub tp_threshold: Option<f64>,
    /// Comma-separated upper ranges R for cumulative 0-R sub-reports.
    #[arg(long, value_delimiter = ',')]
    pub bins: Option<Vec<f64>>,
    #[arg(long)]
    pub max_range: Option<f64>,
    /// Comma-separated class names.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub ap_mode: Option<ApModeArg>,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-class CSV path.
    #[arg(long)]
    pub class_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompressionArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Keep at most this many objects per class (seeded draw).
    #[arg(long)]
    pub per_class_cap: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub lowess_frac: f64,
    #[arg(long, default_value_t = 3)]
    pub lowess_iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (samples.csv, curve.csv, compression.svg).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FdsArgs {
    #[arg(long)]
    pub map: f64,
    #[arg(long)]
    pub mate: f64,
    #[arg(long)]
    pub mase: f64,
    #[arg(long)]
    pub maoe: f64,
    /// Also write the result as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Dataset manifest holding the annotations.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub center_sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub size_sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub yaw_sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub score_jitter: f64,
    #[arg(long, default_value_t = 0.1)]
    pub drop_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub false_positives: f64,
    /// Predictions JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Rectify(a) => commands::rectify(&a),
        Command::Liftsplat(a) => commands::liftsplat(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Compression(a) => commands::compression(&a),
        Command::Fds(a) => commands::fds(&a),
        Command::Perturb(a) => commands::perturb(&a),
    })
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", e.to_line());
        std::process::exit(e.exit_code());
    }
}
