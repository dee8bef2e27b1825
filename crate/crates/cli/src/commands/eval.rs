//! `pcst eval`: score estimated trajectories against the ground truth of
//! the sequence they were tracked from. Trajectory columns are aligned to
//! ground-truth rows through the anchor indices recorded at tracking time.

use std::fmt::Write as _;

use pcst_core::metrics::{
    self, default_drift_checkpoints, default_occlusion_buckets, MetricsReport,
};

use super::{
    align_ground_truth, ensure_out_dir, write_json, write_text, CmdFailure, CmdResult, CONFIG_FILE,
    DRIFT_FILE, OCCLUSION_FILE, REPORT_FILE,
};
use crate::cli::EvalArgs;
use crate::config::RunConfig;
use crate::convert::{lift_record, lift_tensor};
use crate::formats;

pub fn run(cfg: &RunConfig, args: &EvalArgs) -> CmdResult {
    let record = formats::read_sequence(&args.sequence)?;
    let (traj, meta) = formats::read_trajectories(&args.trajectories)?;

    let t = traj.shape()[0];
    if meta.anchor_indices.is_empty() {
        return Err(CmdFailure::config(
            "trajectory file carries no anchor indices; it cannot be aligned with ground truth",
        ));
    }
    if t != record.num_frames() {
        return Err(CmdFailure::Config(format!(
            "trajectories cover {t} frames but the sequence has {}",
            record.num_frames()
        )));
    }

    // Score in f64 regardless of tracking precision: aggregation is cheap
    // and exact widening keeps the comparison faithful.
    let wide = lift_record::<f64>(&record);
    let (gt, visibility) = align_ground_truth(&wide, &meta.anchor_indices)?;
    let pred = lift_tensor::<f64>(&traj);

    let mut opts = cfg.metrics.clone();
    if args.exclude_query_frame {
        opts.exclude_frame = Some(meta.query_frame);
    }
    let cps = opts.drift_checkpoints.unwrap_or_else(default_drift_checkpoints);
    let cps: Vec<usize> = cps.into_iter().filter(|&f| f < t).collect();
    opts.drift_checkpoints = if cps.is_empty() { None } else { Some(cps) };
    if opts.occlusion_buckets.is_none() {
        opts.occlusion_buckets = Some(default_occlusion_buckets());
    }

    let report = metrics::evaluate(&pred, &gt, &visibility, &opts)?;

    ensure_out_dir(&args.out)?;
    let saved = RunConfig { metrics: opts, ..cfg.clone() };
    saved.save(&args.out.join(CONFIG_FILE)).map_err(CmdFailure::Runtime)?;
    write_json(&args.out.join(REPORT_FILE), &report)?;

    if let Some(drift) = &report.drift {
        let mut csv = String::from("frame,epe3d\n");
        for (frame, epe) in drift {
            let _ = writeln!(csv, "{frame},{epe}");
        }
        write_text(&args.out.join(DRIFT_FILE), &csv)?;
    }
    if let Some(occ) = &report.occlusion {
        let mut csv = String::from("occluded_frames,mean_epe3d\n");
        for (label, epe) in occ {
            let _ = writeln!(csv, "{label},{epe}");
        }
        write_text(&args.out.join(OCCLUSION_FILE), &csv)?;
    }

    print_report(&report);
    Ok(())
}

fn print_report(report: &MetricsReport) {
    println!("epe3d      {:.6} m", report.epe3d);
    for (thr, pct) in &report.delta {
        println!("delta<{thr:<4} {pct:.2} %");
    }
    println!("delta_avg  {:.2} %", report.delta_avg);
    println!("mae3d      {:.6} m", report.mae3d);
    println!("survival   {:.2} %", report.survival);
    if let Some(drift) = &report.drift {
        for (frame, epe) in drift {
            println!("drift@{frame:<4} {epe:.6} m");
        }
    }
    if let Some(occ) = &report.occlusion {
        for (label, epe) in occ {
            println!("occ[{label:<4}] {epe:.6} m");
        }
    }
}
