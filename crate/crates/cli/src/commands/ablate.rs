//! `pcst ablate`: generate one scene, sweep a single design axis across a
//! fixed set of variants, score each variant against ground truth, and
//! tabulate the headline metrics as a CSV matrix.

use std::fmt::Write as _;

use pcst_core::correlation::BranchMode;
use pcst_core::metrics::{self, MetricsOptions};
use pcst_core::nn::ParamStore;
use pcst_core::scalar::Scalar;
use pcst_core::synth::{self, SequenceRecord};
use pcst_core::tracker::{self, AuxMode, TrackerConfig};
use pcst_core::trainer::Precision;

use super::{
    align_ground_truth, ensure_out_dir, store_f32, store_f64, visible_anchors, write_text,
    CmdFailure, CmdResult, CONFIG_FILE, MATRIX_FILE,
};
use crate::cli::{AblateArgs, AblateAxis};
use crate::config::RunConfig;
use crate::convert::lift_record;

/// Iteration counts swept by the `iterations` axis.
pub const ITERATION_VALUES: [usize; 3] = [1, 2, 4];
/// Window lengths swept by the `window-size` axis.
pub const WINDOW_VALUES: [usize; 3] = [2, 8, 16];
/// Query counts swept by the `query-count` axis.
pub const QUERY_COUNT_VALUES: [usize; 3] = [16, 64, 256];
/// Correlation branch settings swept by the `correlation-branch` axis.
pub const BRANCH_VALUES: [(BranchMode, &str); 3] = [
    (BranchMode::PointOnly, "point-only"),
    (BranchMode::VoxelOnly, "voxel-only"),
    (BranchMode::Both, "both"),
];
/// Auxiliary modes swept by the `aux-mode` axis.
pub const AUX_VALUES: [(AuxMode, &str); 6] = [
    (AuxMode::None, "none"),
    (AuxMode::LocalKnn, "local-knn"),
    (AuxMode::GlobalFps, "global-fps"),
    (AuxMode::GlobalRandom, "global-random"),
    (AuxMode::KnnPlusFps, "knn-plus-fps"),
    (AuxMode::KnnPlusRandom, "knn-plus-random"),
];

struct Variant {
    label: String,
    tracker: TrackerConfig,
    queries: usize,
}

fn axis_name(axis: AblateAxis) -> &'static str {
    match axis {
        AblateAxis::Iterations => "iterations",
        AblateAxis::WindowSize => "window-size",
        AblateAxis::CorrelationBranch => "correlation-branch",
        AblateAxis::AuxMode => "aux-mode",
        AblateAxis::QueryCount => "query-count",
    }
}

fn build_variants(cfg: &RunConfig, args: &AblateArgs) -> Result<Vec<Variant>, CmdFailure> {
    let base = cfg.train.tracker.clone();
    let frames = cfg.scene.frames;
    let mut variants = Vec::new();
    let mut push = |label: String, tracker: TrackerConfig, queries: usize| {
        variants.push(Variant { label, tracker, queries });
    };
    match args.axis {
        AblateAxis::Iterations => {
            for k in ITERATION_VALUES {
                let mut t = base.clone();
                t.iterations = k;
                push(k.to_string(), t, args.queries);
            }
        }
        AblateAxis::WindowSize => {
            for w in WINDOW_VALUES {
                if w > frames {
                    return Err(CmdFailure::Config(format!(
                        "window-size axis needs at least {w} frames, scene has {frames}"
                    )));
                }
                let mut t = base.clone();
                t.window_length = w;
                push(w.to_string(), t, args.queries);
            }
        }
        AblateAxis::CorrelationBranch => {
            for (mode, label) in BRANCH_VALUES {
                let mut t = base.clone();
                t.correlation.mode = mode;
                push(label.to_string(), t, args.queries);
            }
        }
        AblateAxis::AuxMode => {
            for (mode, label) in AUX_VALUES {
                let mut t = base.clone();
                t.auxiliary.mode = mode;
                push(label.to_string(), t, args.queries);
            }
        }
        AblateAxis::QueryCount => {
            for q in QUERY_COUNT_VALUES {
                push(q.to_string(), base.clone(), q);
            }
        }
    }
    Ok(variants)
}

pub fn run(cfg: &RunConfig, args: &AblateArgs) -> CmdResult {
    if args.queries == 0 {
        return Err(CmdFailure::config("--queries must be at least 1"));
    }
    let variants = build_variants(cfg, args)?;
    let max_queries = variants.iter().map(|v| v.queries).max().unwrap_or(0);
    if max_queries > cfg.scene.trajectories {
        return Err(CmdFailure::Config(format!(
            "axis needs {max_queries} queries but the scene only tracks {} trajectories",
            cfg.scene.trajectories
        )));
    }
    for v in &variants {
        if v.tracker.window_length > cfg.scene.frames {
            return Err(CmdFailure::Config(format!(
                "window length {} exceeds the scene's {} frames",
                v.tracker.window_length, cfg.scene.frames
            )));
        }
        v.tracker.validate().map_err(|e| CmdFailure::config(e))?;
    }

    let mut scene = cfg.scene.clone();
    scene.seed = cfg.seed;
    let record = synth::generate::<f32>(&scene)?;
    let visible = visible_anchors(&record, 0);
    if max_queries > visible {
        return Err(CmdFailure::Config(format!(
            "axis needs {max_queries} queries but only {visible} anchors are visible at frame 0"
        )));
    }

    ensure_out_dir(&args.out)?;
    let saved = RunConfig { scene, ..cfg.clone() };
    saved.save(&args.out.join(CONFIG_FILE)).map_err(CmdFailure::Runtime)?;

    let rows = match cfg.precision {
        Precision::F32 => {
            let store = store_f32(args.checkpoint.as_deref(), cfg.seed)?;
            sweep(&record, &variants, store, cfg)?
        }
        Precision::F64 => {
            let store = store_f64(args.checkpoint.as_deref(), cfg.seed)?;
            sweep(&lift_record::<f64>(&record), &variants, store, cfg)?
        }
    };

    let axis = axis_name(args.axis);
    let mut csv = String::from("axis,value,epe3d,delta_avg,mae3d,survival\n");
    for (label, m) in &rows {
        let _ = writeln!(csv, "{axis},{label},{},{},{},{}", m.epe3d, m.delta_avg, m.mae3d, m.survival);
    }
    write_text(&args.out.join(MATRIX_FILE), &csv)?;

    println!("{:<18} {:>12} {:>12} {:>12} {:>12}", "value", "epe3d", "delta_avg", "mae3d", "survival");
    for (label, m) in &rows {
        println!(
            "{label:<18} {:>12.6} {:>12.2} {:>12.6} {:>12.2}",
            m.epe3d, m.delta_avg, m.mae3d, m.survival
        );
    }
    println!("matrix: {}", args.out.join(MATRIX_FILE).display());
    Ok(())
}

fn sweep<S: Scalar>(
    record: &SequenceRecord<S>,
    variants: &[Variant],
    base_store: ParamStore<S>,
    cfg: &RunConfig,
) -> Result<Vec<(String, metrics::MetricsReport)>, CmdFailure> {
    // The matrix keeps only headline columns; drift and occlusion tables
    // belong to `eval`.
    let opts = MetricsOptions {
        drift_checkpoints: None,
        occlusion_buckets: None,
        ..cfg.metrics.clone()
    };
    let frame_len = record.frames[0].len();
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let mut tracker_cfg = v.tracker.clone();
        tracker_cfg.auxiliary.count = tracker_cfg.auxiliary.count.min(frame_len);
        let sample = synth::sample_queries(record, v.queries, 0, cfg.seed)?;
        // Each variant starts from the same parameters: seeded materialization
        // is name-keyed, so a clone keeps rows independent yet identical.
        let mut store = base_store.clone();
        let pred =
            tracker::track_sequence(&record.frames, &sample.queries, 0, &mut store, &tracker_cfg)?;
        let (gt, vis) = align_ground_truth(record, &sample.anchor_indices)?;
        let report = metrics::evaluate(&pred, &gt, &vis, &opts)?;
        log::info!("ablate {}: epe3d {:.6}", v.label, report.epe3d);
        rows.push((v.label.clone(), report));
    }
    Ok(rows)
}
