//! `pcst track`: estimate trajectories for one sequence and write them as a
//! trajectory file with provenance, plus a JSON summary.

use std::path::Path;

use pcst_core::nn::ParamStore;
use pcst_core::scalar::Scalar;
use pcst_core::synth::{self, SequenceRecord};
use pcst_core::tracker::{self, TrackerConfig};
use pcst_core::trainer::Precision;

use super::{
    ensure_out_dir, store_f32, store_f64, visible_anchors, write_json, CmdFailure, CmdResult,
    CONFIG_FILE, SUMMARY_FILE, TRAJECTORY_FILE,
};
use crate::cli::TrackArgs;
use crate::config::RunConfig;
use crate::convert::{lift_record, lower_tensor};
use crate::formats::{self, TrajectoryMeta};

pub fn run(cfg: &RunConfig, args: &TrackArgs) -> CmdResult {
    let record = formats::read_sequence(&args.sequence)?;
    let total = record.num_frames();

    let mut tracker_cfg = cfg.train.tracker.clone();
    if let Some(w) = args.window {
        tracker_cfg.window_length = w;
    }
    if let Some(k) = args.iterations {
        tracker_cfg.iterations = k;
    }
    if let Some(m) = args.aux_mode {
        tracker_cfg.auxiliary.mode = m.into();
    }
    if let Some(c) = args.aux_count {
        tracker_cfg.auxiliary.count = c;
    }
    tracker_cfg.validate().map_err(|e| CmdFailure::config(e))?;

    if tracker_cfg.window_length > total {
        return Err(CmdFailure::Config(format!(
            "window length {} exceeds the sequence's {total} frames",
            tracker_cfg.window_length
        )));
    }
    if args.query_frame >= tracker_cfg.window_length {
        return Err(CmdFailure::Config(format!(
            "query frame {} must lie inside the first {}-frame window",
            args.query_frame, tracker_cfg.window_length
        )));
    }
    // The auxiliary budget can never exceed the anchor frame's size.
    let frame_len = record.frames[args.query_frame].len();
    tracker_cfg.auxiliary.count = tracker_cfg.auxiliary.count.min(frame_len);

    let visible = visible_anchors(&record, args.query_frame);
    let n_queries = args.queries.unwrap_or(visible);
    if n_queries == 0 {
        return Err(CmdFailure::config("no queries to track"));
    }
    if n_queries > visible {
        return Err(CmdFailure::Config(format!(
            "requested {n_queries} queries but only {visible} anchors are visible at frame {}",
            args.query_frame
        )));
    }
    let query_seed = args.query_seed.unwrap_or(cfg.seed);

    ensure_out_dir(&args.out)?;
    let saved = {
        let mut c = cfg.clone();
        c.train.tracker = tracker_cfg.clone();
        c
    };
    saved.save(&args.out.join(CONFIG_FILE)).map_err(CmdFailure::Runtime)?;

    let sequence_name = args
        .sequence
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();

    match cfg.precision {
        Precision::F32 => {
            let store = store_f32(args.checkpoint.as_deref(), cfg.seed)?;
            track_impl(&record, store, &tracker_cfg, args, query_seed, n_queries, &args.out, sequence_name, "f32")
        }
        Precision::F64 => {
            let store = store_f64(args.checkpoint.as_deref(), cfg.seed)?;
            let wide = lift_record::<f64>(&record);
            track_impl(&wide, store, &tracker_cfg, args, query_seed, n_queries, &args.out, sequence_name, "f64")
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn track_impl<S: Scalar>(
    record: &SequenceRecord<S>,
    mut store: ParamStore<S>,
    tracker_cfg: &TrackerConfig,
    args: &TrackArgs,
    query_seed: u64,
    n_queries: usize,
    out: &Path,
    sequence_name: String,
    precision_label: &str,
) -> CmdResult {
    let sample = synth::sample_queries(record, n_queries, args.query_frame, query_seed)?;
    let trajectories = tracker::track_sequence(
        &record.frames,
        &sample.queries,
        args.query_frame,
        &mut store,
        tracker_cfg,
    )?;

    let meta = TrajectoryMeta {
        sequence: sequence_name,
        query_frame: args.query_frame,
        query_seed,
        anchor_indices: sample.anchor_indices.clone(),
        precision: precision_label.to_string(),
    };
    let traj_path = out.join(TRAJECTORY_FILE);
    formats::write_trajectories(&traj_path, &lower_tensor(&trajectories), &meta)?;

    let summary = serde_json::json!({
        "sequence": meta.sequence,
        "frames": record.num_frames(),
        "queries": n_queries,
        "query_frame": args.query_frame,
        "query_seed": query_seed,
        "window_length": tracker_cfg.window_length,
        "iterations": tracker_cfg.iterations,
        "auxiliary_mode": tracker_cfg.auxiliary.mode,
        "auxiliary_count": tracker_cfg.auxiliary.count,
        "precision": precision_label,
        "trajectories": TRAJECTORY_FILE,
    });
    write_json(&out.join(SUMMARY_FILE), &summary)?;

    println!(
        "tracked {n_queries} queries across {} frames -> {}",
        record.num_frames(),
        traj_path.display()
    );
    Ok(())
}
