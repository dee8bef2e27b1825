//! Subcommand implementations and the plumbing they share: error-to-exit
//! classification, dataset loading, checkpoint/precision resolution, and
//! ground-truth alignment.

pub mod ablate;
pub mod eval;
pub mod generate;
pub mod plot;
pub mod track;

pub mod train;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use pcst_core::nn::ParamStore;
use pcst_core::scalar::Scalar;
use pcst_core::synth::SequenceRecord;
use pcst_core::tensor::Tensor;

use crate::convert::{lift_record, lift_store};
use crate::formats::{self, AnyStore, FileError};

/// Standard artifact names written into output directories.
pub const CONFIG_FILE: &str = "config.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const FINAL_CHECKPOINT_FILE: &str = "checkpoint.pckp";
pub const TRAJECTORY_FILE: &str = "trajectories.pct";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.json";
pub const DRIFT_FILE: &str = "drift.csv";
pub const OCCLUSION_FILE: &str = "occlusion.csv";
pub const MATRIX_FILE: &str = "matrix.csv";
pub const PLOT_FILE: &str = "plot.svg";
pub const PLOT_CSV_FILE: &str = "trajectories.csv";

/// A command failure, classified by exit code: configuration and usage
/// problems exit 2, everything that goes wrong while doing the work exits 1.
#[derive(Debug)]
pub enum CmdFailure {
    Config(String),
    Runtime(anyhow::Error),
}

pub type CmdResult = Result<(), CmdFailure>;

impl CmdFailure {
    pub fn config(msg: impl fmt::Display) -> Self {
        CmdFailure::Config(msg.to_string())
    }
}

impl From<anyhow::Error> for CmdFailure {
    fn from(e: anyhow::Error) -> Self {
        CmdFailure::Runtime(e)
    }
}

impl From<pcst_core::Error> for CmdFailure {
    fn from(e: pcst_core::Error) -> Self {
        CmdFailure::Runtime(anyhow!(e))
    }
}

impl From<FileError> for CmdFailure {
    fn from(e: FileError) -> Self {
        CmdFailure::Runtime(anyhow!(e))
    }
}

/// Create an output directory (and parents) if needed.
pub fn ensure_out_dir(path: &Path) -> CmdResult {
    fs::create_dir_all(path).map_err(|e| {
        CmdFailure::Runtime(anyhow!("cannot create output directory {}: {e}", path.display()))
    })
}

/// All sequence files in a directory, sorted by file name.
pub fn sequence_files(dir: &Path) -> Result<Vec<PathBuf>, CmdFailure> {
    let entries = fs::read_dir(dir).map_err(|e| {
        CmdFailure::Config(format!("cannot read data directory {}: {e}", dir.display()))
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == formats::SEQUENCE_EXT))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CmdFailure::Config(format!(
            "no .{} sequence files in {}",
            formats::SEQUENCE_EXT,
            dir.display()
        )));
    }
    Ok(files)
}

/// Load every sequence in a directory, sorted by file name.
pub fn load_dataset(dir: &Path) -> Result<Vec<SequenceRecord<f32>>, CmdFailure> {
    sequence_files(dir)?
        .iter()
        .map(|p| formats::read_sequence(p).map_err(CmdFailure::from))
        .collect()
}

/// Resolve a parameter store at `f32`: load the checkpoint if given
/// (rejecting 64-bit files, which cannot be narrowed), else seed a fresh one.
pub fn store_f32(checkpoint: Option<&Path>, seed: u64) -> Result<ParamStore<f32>, CmdFailure> {
    match checkpoint {
        None => Ok(ParamStore::new(seed)),
        Some(path) => match formats::read_checkpoint(path)? {
            AnyStore::F32(s) => Ok(s),
            AnyStore::F64(_) => Err(CmdFailure::Config(format!(
                "checkpoint {} holds 64-bit parameters; rerun with --precision f64",
                path.display()
            ))),
        },
    }
}

/// Resolve a parameter store at `f64`: widen 32-bit checkpoints exactly.
pub fn store_f64(checkpoint: Option<&Path>, seed: u64) -> Result<ParamStore<f64>, CmdFailure> {
    match checkpoint {
        None => Ok(ParamStore::new(seed)),
        Some(path) => match formats::read_checkpoint(path)? {
            AnyStore::F32(s) => Ok(lift_store(&s)),
            AnyStore::F64(s) => Ok(s),
        },
    }
}

/// Select the ground-truth columns named by `anchor_indices` out of a
/// record, producing an aligned `[T, n, 3]` grid and its visibility flags.
pub fn align_ground_truth<S: Scalar>(
    record: &SequenceRecord<S>,
    anchor_indices: &[usize],
) -> Result<(Tensor<S>, Vec<bool>), CmdFailure> {
    let t = record.num_frames();
    let n_gt = record.num_trajectories();
    for &i in anchor_indices {
        if i >= n_gt {
            return Err(CmdFailure::Config(format!(
                "anchor index {i} outside the sequence's {n_gt} trajectories"
            )));
        }
    }
    let n = anchor_indices.len();
    let mut data = Vec::with_capacity(t * n * 3);
    let mut vis = Vec::with_capacity(t * n);
    for frame in 0..t {
        for &i in anchor_indices {
            let p = record.gt_position(frame, i);
            data.extend_from_slice(&p);
            vis.push(record.visible(frame, i));
        }
    }
    let gt = Tensor::new(&[t, n, 3], data).map_err(CmdFailure::from)?;
    Ok((gt, vis))
}

/// Number of ground-truth anchors measurable at `frame`.
pub fn visible_anchors<S: Scalar>(record: &SequenceRecord<S>, frame: usize) -> usize {
    (0..record.num_trajectories()).filter(|&i| record.visible(frame, i)).count()
}

/// `lift_record` for a whole dataset.
pub fn lift_dataset<S: Scalar>(records: &[SequenceRecord<f32>]) -> Vec<SequenceRecord<S>> {
    records.iter().map(lift_record).collect()
}

/// Write JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CmdFailure::Runtime(anyhow!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CmdFailure::Runtime(anyhow!("cannot write {}: {e}", path.display())))
}

/// Write a text artifact (CSV, SVG).
pub fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text)
        .map_err(|e| CmdFailure::Runtime(anyhow!("cannot write {}: {e}", path.display())))
}
