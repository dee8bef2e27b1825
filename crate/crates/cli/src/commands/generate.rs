//! `pcst generate`: build synthetic sequences and write them as sequence
//! files, one per seed offset, plus the resolved configuration.

use pcst_core::synth;

use super::{ensure_out_dir, CmdFailure, CmdResult, CONFIG_FILE};
use crate::cli::GenerateArgs;
use crate::config::RunConfig;
use crate::formats;

/// File name for sequence `i`.
pub fn sequence_name(i: usize) -> String {
    format!("seq-{i:03}.pcs")
}

pub fn run(cfg: &RunConfig, args: &GenerateArgs) -> CmdResult {
    if args.count == 0 {
        return Err(CmdFailure::config("--count must be at least 1"));
    }
    let mut scene = cfg.scene.clone();
    if let Some(v) = args.frames {
        scene.frames = v;
    }
    if let Some(v) = args.points {
        scene.points_per_frame = v;
    }
    if let Some(v) = args.trajectories {
        scene.trajectories = v;
    }
    if let Some(v) = args.bodies {
        scene.bodies = v;
    }
    if let Some(v) = args.background {
        scene.background_points = v;
    }
    if let Some(v) = args.sheet {
        scene.sheet = v;
    }
    if let Some(v) = args.occluder {
        scene.occluder = v;
    }
    if let Some(s) = args.speed_scale {
        if !(s.is_finite() && s >= 0.0) {
            return Err(CmdFailure::config("--speed-scale must be a finite non-negative factor"));
        }
        scene.linear_speed = (scene.linear_speed.0 * s, scene.linear_speed.1 * s);
        scene.angular_speed = (scene.angular_speed.0 * s, scene.angular_speed.1 * s);
    }
    scene.validate().map_err(|e| CmdFailure::config(e))?;

    ensure_out_dir(&args.out)?;
    for i in 0..args.count {
        let mut spec = scene.clone();
        spec.seed = cfg.seed.wrapping_add(i as u64);
        let record = synth::generate::<f32>(&spec)?;
        formats::write_sequence(&args.out.join(sequence_name(i)), &record)?;
    }

    let saved = RunConfig { scene: scene.clone(), ..cfg.clone() };
    saved.save(&args.out.join(CONFIG_FILE)).map_err(CmdFailure::Runtime)?;

    println!(
        "wrote {} sequence(s) to {} ({} frames x {} points, {} trajectories each)",
        args.count,
        args.out.display(),
        scene.frames,
        scene.points_per_frame,
        scene.trajectories
    );
    Ok(())
}
