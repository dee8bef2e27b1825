//! Criteria 9 and 10: the command-line surface. Ablation sweeps produce the
//! advertised variant tables, and rerunning any command with the same seed
//! and a single worker thread reproduces every artifact bit for bit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pcst::config::RunConfig;
use pcst_core::metrics::OcclusionBucket;
use pcst_core::synth::SceneSpec;

use crate::micro_tracker;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_pcst")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pcst-acceptance-{name}-{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).expect("clear scratch directory");
    }
    fs::create_dir_all(&dir).expect("create scratch directory");
    dir
}

fn run_ok(args: &[&str]) -> Output {
    let out = Command::new(binary()).args(args).output().expect("spawn pcst");
    assert!(
        out.status.success(),
        "pcst {:?} failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

/// A small scene plus a small model: enough structure to exercise every
/// code path while keeping each spawned run under a few seconds.
fn micro_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 33;
    cfg.threads = 1;
    cfg.scene = SceneSpec {
        frames: 8,
        points_per_frame: 96,
        background_points: 16,
        bodies: 2,
        body_size: (0.2, 0.4),
        linear_speed: (0.02, 0.05),
        angular_speed: (0.02, 0.06),
        sheet: false,
        occluder: false,
        trajectories: 16,
        ..SceneSpec::default()
    };
    cfg.train.steps = 3;
    cfg.train.queries = 4;
    cfg.train.lr = 1e-3;
    cfg.train.tracker = micro_tracker(4, 2);
    cfg.metrics.drift_checkpoints = Some(vec![1, 5]);
    cfg.metrics.occlusion_buckets = Some(vec![
        OcclusionBucket { lo: 0, hi: Some(0) },
        OcclusionBucket { lo: 1, hi: None },
    ]);
    cfg
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("run.json");
    cfg.save(&path).expect("write run configuration");
    path
}

// ---------------------------------------------------------------------------
// Criterion 9: ablation machinery.
// ---------------------------------------------------------------------------

/// Parsed matrix.csv: (axis, value, four finite metric columns).
fn read_matrix(dir: &Path) -> Vec<(String, String, [f64; 4])> {
    let text = fs::read_to_string(dir.join("matrix.csv")).expect("read matrix.csv");
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("axis,value,epe3d,delta_avg,mae3d,survival"),
        "matrix.csv header"
    );
    lines
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 6, "matrix row {line:?}");
            let mut nums = [0.0; 4];
            for (slot, cell) in nums.iter_mut().zip(&cells[2..]) {
                *slot = cell.parse::<f64>().unwrap_or_else(|e| {
                    panic!("non-numeric matrix cell {cell:?} in {line:?}: {e}")
                });
                assert!(slot.is_finite(), "non-finite matrix cell {cell:?} in {line:?}");
            }
            (cells[0].to_string(), cells[1].to_string(), nums)
        })
        .collect()
}

pub fn c09_ablation_machinery() {
    let dir = scratch("ablate");
    let cfg_path = write_config(&dir, &micro_config());
    let cfg_str = cfg_path.to_str().expect("utf-8 path");

    let branches = dir.join("branches");
    run_ok(&[
        "--config",
        cfg_str,
        "ablate",
        "--axis",
        "correlation-branch",
        "--out",
        branches.to_str().unwrap(),
        "--queries",
        "8",
    ]);
    let rows = read_matrix(&branches);
    assert_eq!(rows.len(), 3, "correlation-branch sweep must have three variants");
    let labels: Vec<&str> = rows.iter().map(|(_, v, _)| v.as_str()).collect();
    assert_eq!(labels, ["point-only", "voxel-only", "both"]);
    assert!(rows.iter().all(|(axis, _, _)| axis == "correlation-branch"));
    assert!(branches.join("config.json").is_file(), "sweep must save its configuration");

    let iterations = dir.join("iterations");
    run_ok(&[
        "--config",
        cfg_str,
        "ablate",
        "--axis",
        "iterations",
        "--out",
        iterations.to_str().unwrap(),
        "--queries",
        "8",
    ]);
    let rows = read_matrix(&iterations);
    let labels: Vec<&str> = rows.iter().map(|(_, v, _)| v.as_str()).collect();
    assert_eq!(labels, ["1", "2", "4"], "iteration sweep must cover 1, 2, and 4 refinements");
    assert!(rows.iter().all(|(axis, _, _)| axis == "iterations"));

    fs::remove_dir_all(&dir).ok();
}

// ---------------------------------------------------------------------------
// Criterion 10: bit-identical reruns.
// ---------------------------------------------------------------------------

/// Relative paths of every file under `dir`, sorted.
fn file_listing(dir: &Path) -> Vec<PathBuf> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).expect("read artifact directory") {
            let path = entry.expect("directory entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push(path.strip_prefix(root).expect("relative path").to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

/// Both directories hold the same files with identical bytes.
fn assert_dirs_bit_identical(a: &Path, b: &Path, what: &str) {
    let listing = file_listing(a);
    assert_eq!(listing, file_listing(b), "{what}: reruns produced different artifact sets");
    assert!(!listing.is_empty(), "{what}: no artifacts were written");
    for rel in listing {
        let bytes_a = fs::read(a.join(&rel)).expect("read first run");
        let bytes_b = fs::read(b.join(&rel)).expect("read second run");
        assert!(
            bytes_a == bytes_b,
            "{what}: artifact {} differs between identical reruns ({} vs {} bytes)",
            rel.display(),
            bytes_a.len(),
            bytes_b.len(),
        );
    }
}

pub fn c10_reproducibility() {
    let dir = scratch("rerun");
    let cfg_path = write_config(&dir, &micro_config());
    let cfg = cfg_path.to_str().expect("utf-8 path");

    // Every invocation pins --threads 1 and the same seed via the shared
    // configuration file; A/B output directories are compared byte for byte.
    let path_of = |name: &str| dir.join(name);
    let s = |p: &PathBuf| p.to_str().unwrap().to_string();

    let (gen_a, gen_b) = (path_of("gen-a"), path_of("gen-b"));
    for out in [&gen_a, &gen_b] {
        run_ok(&[
            "--config", cfg, "--threads", "1", "generate", "--out", &s(out), "--count", "2",
        ]);
    }
    assert_dirs_bit_identical(&gen_a, &gen_b, "generate");

    let (train_a, train_b) = (path_of("train-a"), path_of("train-b"));
    for out in [&train_a, &train_b] {
        run_ok(&[
            "--config", cfg, "--threads", "1", "train", "--data", &s(&gen_a), "--out", &s(out),
        ]);
    }
    assert_dirs_bit_identical(&train_a, &train_b, "train");

    let sequence = gen_a.join("seq-000.pcs");
    let checkpoint = train_a.join("checkpoint.pckp");
    let (track_a, track_b) = (path_of("track-a"), path_of("track-b"));
    for out in [&track_a, &track_b] {
        run_ok(&[
            "--config",
            cfg,
            "--threads",
            "1",
            "track",
            "--sequence",
            sequence.to_str().unwrap(),
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--out",
            &s(out),
            "--queries",
            "8",
        ]);
    }
    assert_dirs_bit_identical(&track_a, &track_b, "track");

    let trajectories = track_a.join("trajectories.pct");
    let (eval_a, eval_b) = (path_of("eval-a"), path_of("eval-b"));
    for out in [&eval_a, &eval_b] {
        run_ok(&[
            "--config",
            cfg,
            "--threads",
            "1",
            "eval",
            "--sequence",
            sequence.to_str().unwrap(),
            "--trajectories",
            trajectories.to_str().unwrap(),
            "--out",
            &s(out),
        ]);
    }
    assert_dirs_bit_identical(&eval_a, &eval_b, "eval");
    for name in ["report.json", "drift.csv", "occlusion.csv"] {
        assert!(eval_a.join(name).is_file(), "eval must write {name}");
    }

    fs::remove_dir_all(&dir).ok();
}
