//! Criteria 6 and 7: the trainer actually learns. First overfitting a single
//! record far past the identity and static baselines, then generalizing from
//! a 200-sequence rigid-motion corpus to held-out sequences.

use pcst_core::metrics::{drift_table, evaluate, MetricsOptions};
use pcst_core::nn::ParamStore;
use pcst_core::synth::{generate, sample_queries, SceneSpec, SequenceRecord};
use pcst_core::tensor::Tensor;
use pcst_core::tracker::track_sequence;
use pcst_core::trainer::{train, Precision, TrainConfig};

use crate::desk_tracker;

/// Constant trajectories: every frame repeats the query positions.
fn static_predictions(queries: &pcst_core::geom::PointSet<f32>, frames: usize) -> Tensor<f32> {
    let n = queries.len();
    let mut data = Vec::with_capacity(frames * n * 3);
    for _ in 0..frames {
        for q in queries.coords() {
            data.extend_from_slice(q);
        }
    }
    Tensor::new(&[frames, n, 3], data).expect("static grid")
}

fn epe(pred: &Tensor<f32>, gt: &Tensor<f32>, vis: &[bool]) -> f64 {
    evaluate(pred, gt, vis, &MetricsOptions::default()).expect("evaluate").epe3d
}

// ---------------------------------------------------------------------------
// Criterion 6: 500 steps on one fixed record.
// ---------------------------------------------------------------------------

pub fn c06_micro_overfit() {
    let scene = SceneSpec {
        seed: 0x06,
        frames: 8,
        points_per_frame: 512,
        background_points: 64,
        bodies: 2,
        body_size: (0.2, 0.4),
        linear_speed: (0.02, 0.05),
        angular_speed: (0.02, 0.06),
        sheet: false,
        occluder: false,
        trajectories: 64,
        ..SceneSpec::default()
    };
    let record = generate::<f32>(&scene).expect("record");

    let cfg = TrainConfig {
        lr: 3e-3,
        steps: 500,
        batch: 1,
        queries: 16,
        gamma: 0.8,
        weight_decay: 1e-4,
        warmup_frac: 0.05,
        final_lr_frac: 0.01,
        checkpoint_every: 0,
        seed: 0x60,
        precision: Precision::F32,
        tracker: desk_tracker(8),
    };

    // Fixed evaluation queries, drawn once.
    let sample = sample_queries(&record, 16, 0, 0x61).expect("queries");

    // Untrained model: a fresh store still has the zero predictor head.
    let mut untrained = ParamStore::<f32>::new(cfg.seed);
    let before = track_sequence(
        &record.frames,
        &sample.queries,
        0,
        &mut untrained,
        &cfg.tracker,
    )
    .expect("untrained tracking");
    let epe_untrained = epe(&before, &sample.gt, &sample.visibility);

    // Static baseline: trajectories frozen at the query positions.
    let frozen = static_predictions(&sample.queries, record.num_frames());
    let epe_static = epe(&frozen, &sample.gt, &sample.visibility);

    let mut store = ParamStore::<f32>::new(cfg.seed);
    let records = [record];
    let curve = train(&records, &cfg, &mut store, |_, _| {}).expect("training");
    assert_eq!(curve.len(), cfg.steps);
    assert!(curve.iter().all(|l| l.loss.is_finite()));

    let after = track_sequence(&records[0].frames, &sample.queries, 0, &mut store, &cfg.tracker)
        .expect("trained tracking");
    let epe_trained = epe(&after, &sample.gt, &sample.visibility);

    eprintln!(
        "  single-record overfit: untrained {epe_untrained:.4} m, static {epe_static:.4} m, \
         trained {epe_trained:.4} m"
    );
    assert!(
        epe_trained < 0.25 * epe_untrained,
        "trained error {epe_trained:.4} did not fall below 25% of the untrained {epe_untrained:.4}"
    );
    assert!(
        epe_trained <= 0.5 * epe_static,
        "trained error {epe_trained:.4} did not halve the static baseline {epe_static:.4}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: generalization to held-out sequences.
// ---------------------------------------------------------------------------

const DESK_TRAIN_SEQUENCES: usize = 200;
const DESK_HELDOUT_SEQUENCES: usize = 20;
const DESK_STEPS: usize = 5_000;
const DESK_QUERIES: usize = 48;
const DESK_PEAK_LR: f64 = 3e-3;
/// Drift is compared between an early and the final frame of 24-frame
/// held-out sequences (zero-based indices; queries anchor at frame 0).
const DRIFT_EARLY_FRAME: usize = 2;
const DRIFT_LATE_FRAME: usize = 23;

fn desk_scene(seed: u64) -> SceneSpec {
    // Rigid translation + rotation only; the worst-case surface speed —
    // linear plus angular times the largest half-diagonal lever arm — stays
    // below 0.05 m/frame: 0.035 + 0.028·(√3·0.3) ≈ 0.0496.
    SceneSpec {
        seed,
        frames: 24,
        points_per_frame: 1024,
        background_points: 32,
        bodies: 3,
        body_size: (0.15, 0.3),
        linear_speed: (0.015, 0.035),
        angular_speed: (0.008, 0.028),
        sheet: false,
        occluder: false,
        trajectories: 64,
        ..SceneSpec::default()
    }
}

pub fn c07_generalization() {
    let corpus: Vec<SequenceRecord<f32>> = (0..DESK_TRAIN_SEQUENCES)
        .map(|i| generate(&desk_scene(0x7000 + i as u64)).expect("training sequence"))
        .collect();
    let held_out: Vec<SequenceRecord<f32>> = (0..DESK_HELDOUT_SEQUENCES)
        .map(|i| generate(&desk_scene(0x9000 + i as u64)).expect("held-out sequence"))
        .collect();

    let cfg = TrainConfig {
        lr: DESK_PEAK_LR,
        steps: DESK_STEPS,
        batch: 1,
        queries: DESK_QUERIES,
        gamma: 0.8,
        weight_decay: 1e-4,
        warmup_frac: 0.05,
        final_lr_frac: 0.01,
        checkpoint_every: 0,
        seed: 0x70,
        precision: Precision::F32,
        tracker: desk_tracker(8),
    };

    let mut store = ParamStore::<f32>::new(cfg.seed);
    let curve = train(&corpus, &cfg, &mut store, |log, _| {
        if log.step % 500 == 0 {
            eprintln!("  step {:>5}  loss {:.4}  lr {:.2e}", log.step, log.loss, log.lr);
        }
    })
    .expect("training");
    assert_eq!(curve.len(), DESK_STEPS);

    let mut epe_trained = 0.0;
    let mut epe_static = 0.0;
    let mut delta_trained = 0.0;
    let mut delta_static = 0.0;
    let mut drift_early = 0.0;
    let mut drift_late = 0.0;
    for (i, record) in held_out.iter().enumerate() {
        let sample = sample_queries(record, 32, 0, 0x7100 + i as u64).expect("queries");
        let pred = track_sequence(&record.frames, &sample.queries, 0, &mut store, &cfg.tracker)
            .expect("tracking");
        let frozen = static_predictions(&sample.queries, record.num_frames());

        let rep_t = evaluate(&pred, &sample.gt, &sample.visibility, &MetricsOptions::default())
            .expect("trained evaluation");
        let rep_s = evaluate(&frozen, &sample.gt, &sample.visibility, &MetricsOptions::default())
            .expect("static evaluation");
        epe_trained += rep_t.epe3d;
        epe_static += rep_s.epe3d;
        delta_trained += rep_t.delta_avg;
        delta_static += rep_s.delta_avg;

        let drift = drift_table(&pred, &sample.gt, &[DRIFT_EARLY_FRAME, DRIFT_LATE_FRAME])
            .expect("drift table");
        drift_early += drift[0].1;
        drift_late += drift[1].1;
    }
    let m = held_out.len() as f64;
    let (epe_trained, epe_static) = (epe_trained / m, epe_static / m);
    let (delta_trained, delta_static) = (delta_trained / m, delta_static / m);
    let (drift_early, drift_late) = (drift_early / m, drift_late / m);

    eprintln!(
        "  held-out means: EPE {epe_trained:.4} m (static {epe_static:.4}), \
         δ_avg {delta_trained:.2}% (static {delta_static:.2}%), \
         drift frame {DRIFT_EARLY_FRAME} {drift_early:.4} m → frame {DRIFT_LATE_FRAME} \
         {drift_late:.4} m"
    );

    assert!(
        epe_trained <= 0.5 * epe_static,
        "held-out EPE {epe_trained:.4} is not ≤ 50% of the static baseline {epe_static:.4}"
    );
    assert!(
        delta_trained > delta_static,
        "held-out δ_avg {delta_trained:.2}% does not beat the static baseline {delta_static:.2}%"
    );
    assert!(
        drift_late <= 4.0 * drift_early,
        "late-frame error {drift_late:.4} exceeds 4× the early-frame error {drift_early:.4}"
    );
}
