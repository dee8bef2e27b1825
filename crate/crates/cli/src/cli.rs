//! Command-line surface: argument structures for every subcommand.
//!
//! Global flags (`--config`, `--seed`, `--threads`, `--precision`) override
//! the configuration file; each subcommand adds its own task flags. Usage
//! and configuration errors exit with status 2, runtime failures with 1.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pcst_core::correlation::BranchMode;
use pcst_core::tracker::AuxMode;
use pcst_core::trainer::Precision;

#[derive(Parser, Debug)]
#[command(
    name = "pcst",
    version,
    about = "Long-term 3D point trajectory tracking over point-cloud sequences",
    propagate_version = true
)]
pub struct Cli {
    /// JSON run-configuration file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Root random seed (drives scene generation, sampling, and init).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Worker threads; 1 keeps everything sequential.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Element type for model arithmetic (files always store f32).
    #[arg(long, global = true, value_enum)]
    pub precision: Option<PrecisionArg>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic point-cloud sequences with exact ground truth.
    Generate(GenerateArgs),
    /// Train the tracker on a directory of sequence files.
    Train(TrainArgs),
    /// Estimate trajectories for one sequence.
    Track(TrackArgs),
    /// Score estimated trajectories against a sequence's ground truth.
    Eval(EvalArgs),
    /// Sweep one design axis and tabulate the resulting metrics.
    Ablate(AblateArgs),
    /// Render estimated trajectories as an SVG plot.
    Plot(PlotArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Precision {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AuxModeArg {
    None,
    LocalKnn,
    GlobalFps,
    GlobalRandom,
    KnnPlusFps,
    KnnPlusRandom,
}

impl From<AuxModeArg> for AuxMode {
    fn from(m: AuxModeArg) -> AuxMode {
        match m {
            AuxModeArg::None => AuxMode::None,
            AuxModeArg::LocalKnn => AuxMode::LocalKnn,
            AuxModeArg::GlobalFps => AuxMode::GlobalFps,
            AuxModeArg::GlobalRandom => AuxMode::GlobalRandom,
            AuxModeArg::KnnPlusFps => AuxMode::KnnPlusFps,
            AuxModeArg::KnnPlusRandom => AuxMode::KnnPlusRandom,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    PointOnly,
    VoxelOnly,
    Both,
}

impl From<BranchArg> for BranchMode {
    fn from(b: BranchArg) -> BranchMode {
        match b {
            BranchArg::PointOnly => BranchMode::PointOnly,
            BranchArg::VoxelOnly => BranchMode::VoxelOnly,
            BranchArg::Both => BranchMode::Both,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Output directory; sequences are written as seq-NNN.pcs.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Number of sequences (seeded root seed + index).
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub count: usize,

    /// Frames per sequence.
    #[arg(long, value_name = "N")]
    pub frames: Option<usize>,

    /// Points per frame.
    #[arg(long, value_name = "N")]
    pub points: Option<usize>,

    /// Ground-truth trajectories per sequence.
    #[arg(long, value_name = "N")]
    pub trajectories: Option<usize>,

    /// Rigid bodies in the scene.
    #[arg(long, value_name = "N")]
    pub bodies: Option<usize>,

    /// Static background points per frame.
    #[arg(long, value_name = "N")]
    pub background: Option<usize>,

    /// Include the warping sheet surface.
    #[arg(long, value_name = "BOOL")]
    pub sheet: Option<bool>,

    /// Sweep a deleting occluder slab across the scene.
    #[arg(long, value_name = "BOOL")]
    pub occluder: Option<bool>,

    /// Scale factor applied to the linear and angular speed ranges.
    #[arg(long, value_name = "X")]
    pub speed_scale: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of training sequences (*.pcs).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,

    /// Output directory (checkpoints, loss log, resolved configuration).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Optimizer steps.
    #[arg(long, value_name = "N")]
    pub steps: Option<usize>,

    /// Peak learning rate.
    #[arg(long, value_name = "X")]
    pub lr: Option<f64>,

    /// Records sampled per step (gradients averaged).
    #[arg(long, value_name = "N")]
    pub batch: Option<usize>,

    /// Queries drawn per sampled record.
    #[arg(long, value_name = "N")]
    pub queries: Option<usize>,

    /// Write an intermediate checkpoint every this many steps (0 = final only).
    #[arg(long, value_name = "N")]
    pub checkpoint_every: Option<usize>,

    /// Initialize parameters from an existing checkpoint.
    #[arg(long, value_name = "FILE")]
    pub init: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrackArgs {
    /// Sequence file to track.
    #[arg(long, value_name = "FILE")]
    pub sequence: PathBuf,

    /// Checkpoint holding trained parameters (omit for seeded init).
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,

    /// Output directory (trajectories, summary, resolved configuration).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Queries drawn from ground-truth anchors (default: every anchor
    /// visible at the query frame).
    #[arg(long, value_name = "N")]
    pub queries: Option<usize>,

    /// Frame the queries are taken from.
    #[arg(long, default_value_t = 0, value_name = "T")]
    pub query_frame: usize,

    /// Seed for drawing the query subset (default: the run seed).
    #[arg(long, value_name = "N")]
    pub query_seed: Option<u64>,

    /// Window length override (even, ≥ 2).
    #[arg(long, value_name = "N")]
    pub window: Option<usize>,

    /// Refinement iterations per window.
    #[arg(long, value_name = "K")]
    pub iterations: Option<usize>,

    /// Auxiliary-query mode.
    #[arg(long, value_enum)]
    pub aux_mode: Option<AuxModeArg>,

    /// Auxiliary-query budget (clamped to the query frame's size).
    #[arg(long, value_name = "N")]
    pub aux_count: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Sequence file holding the ground truth.
    #[arg(long, value_name = "FILE")]
    pub sequence: PathBuf,

    /// Estimated trajectories to score.
    #[arg(long, value_name = "FILE")]
    pub trajectories: PathBuf,

    /// Output directory (report, drift and occlusion tables).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Leave the query frame out of every metric.
    #[arg(long)]
    pub exclude_query_frame: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblateAxis {
    /// Refinement iterations per window: 1, 2, 4.
    Iterations,
    /// Window length: 2, 8, 16.
    WindowSize,
    /// Correlation branches: point-only, voxel-only, both.
    CorrelationBranch,
    /// Auxiliary-query modes: all six.
    AuxMode,
    /// Queries tracked at once: 16, 64, 256.
    QueryCount,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Design axis to sweep.
    #[arg(long, value_enum)]
    pub axis: AblateAxis,

    /// Output directory (matrix.csv, resolved configuration).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Checkpoint to evaluate (omit for seeded init).
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,

    /// Queries tracked per variant (the query-count axis ignores this).
    #[arg(long, default_value_t = 64, value_name = "N")]
    pub queries: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxesArg {
    /// Project onto x–y.
    Xy,
    /// Project onto x–z.
    Xz,
    /// Project onto y–z.
    Yz,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Trajectory file to render.
    #[arg(long, value_name = "FILE")]
    pub trajectories: PathBuf,

    /// Output directory (plot.svg and the raw coordinate table).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Projection plane.
    #[arg(long, value_enum, default_value_t = AxesArg::Xy)]
    pub axes: AxesArg,

    /// Render only the first N trajectories (0 = all).
    #[arg(long, default_value_t = 0, value_name = "N")]
    pub limit: usize,
}
