//! Criteria 1, 4, 5, 8: brute-force oracle equivalence for the geometry and
//! similarity kernels and the evaluator, the sliding-window plan formula,
//! the iteration-weighted loss arithmetic, and the metric sanity vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pcst_core::correlation::{similarity_truncate, similarity_truncate_frame};
use pcst_core::backbone::FrameFeatures;
use pcst_core::geom::PointSet;
use pcst_core::graph::Graph;
use pcst_core::metrics::{
    default_occlusion_buckets, evaluate, MaeMode, MetricsOptions, OcclusionBucket, SurvivalMode,
};
use pcst_core::tensor::Tensor;
use pcst_core::tracker::plan_windows;
use pcst_core::trainer::window_loss;
use pcst_core::Scalar;

use crate::{assert_close, close};

// ---------------------------------------------------------------------------
// Criterion 1: kernels and evaluator vs independent brute force.
// ---------------------------------------------------------------------------

pub fn c01_oracle_equivalence() {
    crate::within_budget("oracle equivalence", 60, || {
        knn_vs_oracle();
        fps_vs_oracle();
        similarity_vs_oracle();
        evaluate_vs_oracle();
    });
}

/// Coordinates on a 0.25 grid are exact in both f32 and f64, so squared
/// distances are exact dyadic rationals and ties are genuine ties.
fn grid_coords<S: Scalar>(rng: &mut ChaCha8Rng, n: usize, span: i32) -> Vec<[S; 3]> {
    (0..n)
        .map(|_| {
            [0; 3].map(|_| {
                let steps = rng.gen_range(-span..=span);
                S::from_f64(steps as f64 * 0.25)
            })
        })
        .collect()
}

fn free_coords(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|_| [0; 3].map(|_| rng.gen::<f64>() * 4.0 - 2.0)).collect()
}

fn d2<S: Scalar>(a: [S; 3], b: [S; 3]) -> S {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Full-sort k-nearest-neighbor reference: every (distance², index) pair,
/// sorted lexicographically, truncated to k.
fn knn_oracle<S: Scalar>(points: &[[S; 3]], q: [S; 3], k: usize) -> (Vec<usize>, Vec<f64>) {
    let mut pairs: Vec<(S, usize)> =
        points.iter().enumerate().map(|(i, &p)| (d2(q, p), i)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
    pairs.truncate(k);
    (
        pairs.iter().map(|&(_, i)| i).collect(),
        pairs.iter().map(|&(d, _)| d.to_f64().sqrt()).collect(),
    )
}

fn check_knn_instance<S: Scalar>(coords: Vec<[S; 3]>, queries: Vec<[S; 3]>, k: usize) {
    let set = PointSet::new(coords.clone()).expect("valid point set");
    let qset = PointSet::new(queries.clone()).expect("valid queries");
    let got = set.knn_query(&qset, k).expect("knn_query");
    assert_eq!(got.len(), queries.len());
    for (qi, nb) in got.iter().enumerate() {
        let (want_idx, want_dist) = knn_oracle(&coords, queries[qi], k);
        assert_eq!(nb.indices, want_idx, "knn index set for query {qi}");
        for (j, (&g, &w)) in nb.distances.iter().zip(&want_dist).enumerate() {
            assert_close(g.to_f64(), w, 1e-6, &format!("knn distance {j} of query {qi}"));
        }
    }
}

fn knn_vs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC0_0001);
    for case in 0..200u32 {
        let big = case % 25 == 0;
        let n = if big { rng.gen_range(800..=2000) } else { rng.gen_range(1..=256) };
        let nq = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=n.min(24));
        match case % 5 {
            // Tie-heavy grids, both element types.
            0 => check_knn_instance::<f32>(
                grid_coords(&mut rng, n, 6),
                grid_coords(&mut rng, nq, 6),
                k,
            ),
            1 => check_knn_instance::<f64>(
                grid_coords(&mut rng, n, 4),
                grid_coords(&mut rng, nq, 4),
                k,
            ),
            _ => check_knn_instance::<f64>(free_coords(&mut rng, n), free_coords(&mut rng, nq), k),
        }
    }
    // Degenerate shapes: k = n, a single point, all points coincident.
    check_knn_instance::<f64>(free_coords(&mut rng, 7), free_coords(&mut rng, 2), 7);
    check_knn_instance::<f64>(vec![[0.5, -0.25, 1.0]], vec![[0.0, 0.0, 0.0]], 1);
    check_knn_instance::<f64>(vec![[1.0, 2.0, 3.0]; 9], vec![[1.0, 2.0, 3.0]], 9);
}

/// Greedy farthest-point reference that recomputes every min-distance from
/// scratch each round instead of carrying a cache.
fn fps_oracle<S: Scalar>(points: &[[S; 3]], k: usize, start: usize) -> Vec<usize> {
    let mut selected = vec![start];
    for _ in 1..k {
        let mut best = usize::MAX;
        let mut best_d2 = S::neg_infinity();
        for (i, &p) in points.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            let mut min_d2 = S::infinity();
            for &s in &selected {
                let d = d2(p, points[s]);
                if d < min_d2 {
                    min_d2 = d;
                }
            }
            if min_d2 > best_d2 {
                best_d2 = min_d2;
                best = i;
            }
        }
        selected.push(best);
    }
    selected
}

fn check_fps_instance<S: Scalar>(coords: Vec<[S; 3]>, k: usize, start: usize) {
    let set = PointSet::new(coords.clone()).expect("valid point set");
    let got = set.farthest_point_sample(k, start).expect("farthest_point_sample");
    let want = fps_oracle(&coords, k, start);
    assert_eq!(got, want, "selection order for n={} k={k} start={start}", coords.len());
}

fn fps_vs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC0_0002);
    for case in 0..200u32 {
        let n = if case % 40 == 0 { rng.gen_range(600..=1200) } else { rng.gen_range(1..=160) };
        let k = rng.gen_range(1..=n.min(if n > 400 { 16 } else { 48 }));
        let start = rng.gen_range(0..n);
        match case % 5 {
            // Coarse grids force duplicate coordinates and exact ties.
            0 => check_fps_instance::<f32>(grid_coords(&mut rng, n, 2), k, start),
            1 => check_fps_instance::<f64>(grid_coords(&mut rng, n, 2), k, start),
            _ => check_fps_instance::<f64>(free_coords(&mut rng, n), k, start),
        }
    }
    check_fps_instance::<f64>(vec![[0.25, 0.5, -0.75]; 6], 6, 3);
}

/// Reference top-M by scaled dot product: descending similarity, ascending
/// index on ties.
fn sim_oracle(q: &[f64], feats: &[f64], c: usize, m: usize) -> (Vec<usize>, Vec<f64>) {
    let nf = feats.len() / c;
    let dots: Vec<f64> =
        (0..nf).map(|j| (0..c).map(|a| q[a] * feats[j * c + a]).sum::<f64>()).collect();
    let mut order: Vec<usize> = (0..nf).collect();
    order.sort_by(|&a, &b| dots[b].partial_cmp(&dots[a]).expect("finite").then(a.cmp(&b)));
    order.truncate(m);
    let scale = 1.0 / (c as f64).sqrt();
    let values = order.iter().map(|&j| dots[j] * scale).collect();
    (order, values)
}

fn similarity_vs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC0_0003);
    for case in 0..200u32 {
        let nf = if case % 25 == 0 { rng.gen_range(500..=2000) } else { rng.gen_range(1..=160) };
        let c = rng.gen_range(1..=16);
        let nq = if case % 2 == 0 { 1 } else { rng.gen_range(1..=5) };
        let m = rng.gen_range(1..=nf);

        let qdata: Vec<f64> = (0..nq * c).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let mut fdata: Vec<f64> = (0..nf * c).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        // Duplicate some feature rows so top-M selection sees exact ties.
        if case % 3 == 0 && nf >= 4 {
            for dup in 0..nf / 3 {
                let src = (dup * 2) % nf;
                let dst = nf - 1 - dup;
                if src != dst {
                    let row: Vec<f64> = fdata[src * c..(src + 1) * c].to_vec();
                    fdata[dst * c..(dst + 1) * c].copy_from_slice(&row);
                }
            }
        }

        let mut g = Graph::<f64>::new();
        let qnode = g.input(Tensor::new(&[nq, c], qdata.clone()).expect("query tensor"));
        let fnode = g.input(Tensor::new(&[nf, c], fdata.clone()).expect("feature tensor"));
        let frame = FrameFeatures {
            indices: (0..nf).collect(),
            points: PointSet::new(grid_coords::<f64>(&mut rng, nf, 4)).expect("frame points"),
            feats: fnode,
        };
        let trunc = if nq == 1 {
            similarity_truncate(&mut g, qnode, &frame, m).expect("similarity_truncate")
        } else {
            similarity_truncate_frame(&mut g, qnode, &frame, m).expect("similarity_truncate_frame")
        };

        assert_eq!(trunc.m, m);
        assert_eq!(trunc.indices.len(), nq);
        let taped = g.value(trunc.values_node).data().to_vec();
        assert_eq!(taped.len(), nq * m, "taped similarity rows");
        for qi in 0..nq {
            let (want_idx, want_val) = sim_oracle(&qdata[qi * c..(qi + 1) * c], &fdata, c, m);
            assert_eq!(trunc.indices[qi], want_idx, "top-M indices for query {qi}");
            for (j, (&g_v, &w_v)) in trunc.values[qi].iter().zip(&want_val).enumerate() {
                assert_close(g_v, w_v, 1e-6, &format!("similarity {j} of query {qi}"));
                assert_close(taped[qi * m + j], w_v, 1e-6, &format!("taped similarity {j}"));
            }
            // Kept values are sorted descending.
            for w in trunc.values[qi].windows(2) {
                assert!(w[0] >= w[1], "similarities out of order: {} < {}", w[0], w[1]);
            }
        }
    }

    // The single-query wrapper rejects a multi-row block.
    let mut g = Graph::<f64>::new();
    let q = g.input(Tensor::new(&[2, 3], vec![0.0; 6]).expect("tensor"));
    let f = g.input(Tensor::new(&[4, 3], vec![0.0; 12]).expect("tensor"));
    let frame = FrameFeatures {
        indices: (0..4).collect(),
        points: PointSet::new(vec![[0.0, 0.0, 0.0]; 4]).expect("points"),
        feats: f,
    };
    assert!(similarity_truncate(&mut g, q, &frame, 2).is_err());
}

/// Everything `evaluate` reports, recomputed from first principles.
struct OracleReport {
    epe: f64,
    delta: Vec<(f64, f64)>,
    delta_avg: f64,
    mae: f64,
    survival: f64,
    drift: Option<Vec<(usize, f64)>>,
    occlusion: Option<Vec<(String, f64)>>,
}

fn eval_oracle(
    pred: &Tensor<f64>,
    gt: &Tensor<f64>,
    vis: &[bool],
    opts: &MetricsOptions,
) -> OracleReport {
    let t = pred.shape()[0];
    let n = pred.shape()[1];
    let err = |tf: usize, i: usize| -> f64 {
        let base = (tf * n + i) * 3;
        let mut acc = 0.0;
        for a in 0..3 {
            let d = pred.data()[base + a] - gt.data()[base + a];
            acc += d * d;
        }
        acc.sqrt()
    };
    let frames: Vec<usize> = (0..t).filter(|&f| Some(f) != opts.exclude_frame).collect();
    let total = (frames.len() * n) as f64;

    let mut sum = 0.0;
    for &f in &frames {
        for i in 0..n {
            sum += err(f, i);
        }
    }
    let epe = sum / total;

    let delta: Vec<(f64, f64)> = opts
        .delta_thresholds
        .iter()
        .map(|&x| {
            let hits = frames
                .iter()
                .flat_map(|&f| (0..n).map(move |i| (f, i)))
                .filter(|&(f, i)| err(f, i) < x)
                .count();
            (x, 100.0 * hits as f64 / total)
        })
        .collect();
    let delta_avg = if delta.is_empty() {
        0.0
    } else {
        delta.iter().map(|&(_, p)| p).sum::<f64>() / delta.len() as f64
    };

    let means: Vec<f64> = (0..n)
        .map(|i| frames.iter().map(|&f| err(f, i)).sum::<f64>() / frames.len() as f64)
        .collect();
    let mae = match opts.mae_mode {
        MaeMode::MeanAbsolute => epe,
        MaeMode::MedianOfTrajectoryMeans => {
            let mut sorted = means.clone();
            sorted.sort_by(f64::total_cmp);
            let m = sorted.len();
            if m % 2 == 1 {
                sorted[m / 2]
            } else {
                0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
            }
        }
    };

    let mut surv = 0.0;
    for i in 0..n {
        let first = frames
            .iter()
            .position(|&f| err(f, i) > opts.survival_threshold)
            .unwrap_or(frames.len());
        surv += match opts.survival_mode {
            SurvivalMode::Fractional => first as f64 / frames.len() as f64,
            SurvivalMode::Binary => (first == frames.len()) as u8 as f64,
        };
    }
    let survival = 100.0 * surv / n as f64;

    // Drift and occlusion run over the raw frame range, unaffected by the
    // excluded frame.
    let drift = opts.drift_checkpoints.as_ref().map(|cps| {
        cps.iter()
            .map(|&f| (f, (0..n).map(|i| err(f, i)).sum::<f64>() / n as f64))
            .collect()
    });
    let occlusion = opts.occlusion_buckets.as_ref().map(|buckets| {
        let mut sums = vec![0.0; buckets.len()];
        let mut counts = vec![0usize; buckets.len()];
        for i in 0..n {
            let occluded = (0..t).filter(|&f| !vis[f * n + i]).count();
            let b = buckets.iter().position(|b| b.contains(occluded)).expect("covered");
            for f in 0..t {
                sums[b] += err(f, i);
            }
            counts[b] += t;
        }
        buckets
            .iter()
            .zip(sums.iter().zip(&counts))
            .filter(|&(_, (_, &c))| c > 0)
            .map(|(b, (&s, &c))| (b.label(), s / c as f64))
            .collect()
    });

    OracleReport { epe, delta, delta_avg, mae, survival, drift, occlusion }
}

fn evaluate_vs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC0_0004);
    for case in 0..220u32 {
        let t = rng.gen_range(1..=10);
        let n = rng.gen_range(1..=30);
        let mk = |rng: &mut ChaCha8Rng| {
            let data: Vec<f64> = (0..t * n * 3).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            Tensor::new(&[t, n, 3], data).expect("grid tensor")
        };
        let pred = mk(&mut rng);
        let gt = mk(&mut rng);
        let vis: Vec<bool> = (0..t * n).map(|_| rng.gen::<f64>() < 0.8).collect();

        let mut opts = MetricsOptions::default();
        if case % 3 == 1 && t > 1 {
            opts.exclude_frame = Some(rng.gen_range(0..t));
        }
        if case % 4 == 1 {
            opts.mae_mode = MaeMode::MeanAbsolute;
        }
        if case % 5 == 1 {
            opts.survival_mode = SurvivalMode::Binary;
            opts.survival_threshold = rng.gen::<f64>() * 1.2 + 0.1;
        }
        if case % 6 == 1 {
            let mut ths: Vec<f64> = (0..rng.gen_range(2..=5))
                .map(|_| rng.gen::<f64>() * 1.4 + 0.05)
                .collect();
            ths.sort_by(f64::total_cmp);
            opts.delta_thresholds = ths;
        }
        if case % 2 == 0 {
            let cps: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..t)).collect();
            opts.drift_checkpoints = Some(cps);
        }
        if case % 3 == 0 {
            opts.occlusion_buckets = Some(default_occlusion_buckets());
        }

        let rep = evaluate(&pred, &gt, &vis, &opts).expect("evaluate");
        let want = eval_oracle(&pred, &gt, &vis, &opts);

        assert_close(rep.epe3d, want.epe, 1e-9, "epe3d");
        assert_eq!(rep.delta.len(), want.delta.len());
        for ((gx, gp), (wx, wp)) in rep.delta.iter().zip(&want.delta) {
            assert_eq!(gx, wx, "delta threshold");
            assert_close(*gp, *wp, 1e-9, "delta percentage");
        }
        assert_close(rep.delta_avg, want.delta_avg, 1e-9, "delta_avg");
        assert_close(rep.mae3d, want.mae, 1e-9, "mae3d");
        assert_close(rep.survival, want.survival, 1e-9, "survival");
        match (&rep.drift, &want.drift) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                assert_eq!(g.len(), w.len());
                for ((gf, ge), (wf, we)) in g.iter().zip(w) {
                    assert_eq!(gf, wf, "drift frame");
                    assert_close(*ge, *we, 1e-9, "drift error");
                }
            }
            _ => panic!("drift presence mismatch"),
        }
        match (&rep.occlusion, &want.occlusion) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                assert_eq!(g.len(), w.len(), "occlusion bucket count");
                for ((gl, ge), (wl, we)) in g.iter().zip(w) {
                    assert_eq!(gl, wl, "occlusion bucket label");
                    assert_close(*ge, *we, 1e-9, "occlusion bucket error");
                }
            }
            _ => panic!("occlusion presence mismatch"),
        }
    }

    // Out-of-range drift checkpoints are rejected, not clamped.
    let gt = Tensor::new(&[2, 1, 3], vec![0.0; 6]).expect("tensor");
    let opts =
        MetricsOptions { drift_checkpoints: Some(vec![2]), ..MetricsOptions::default() };
    assert!(evaluate(&gt, &gt, &[true, true], &opts).is_err());
}

// ---------------------------------------------------------------------------
// Criterion 4: sliding-window plan.
// ---------------------------------------------------------------------------

pub fn c04_window_plan() {
    for window in (2..=200usize).step_by(2) {
        for total in window..=200usize {
            let plan = plan_windows(total, window).expect("plan_windows");
            let stride = window / 2;
            // ⌈2T'/T − 1⌉ windows, exactly.
            let want_count = (2 * total - window).div_ceil(window);
            assert_eq!(
                plan.windows.len(),
                want_count,
                "window count for total={total} window={window}"
            );
            assert_eq!(plan.stride, stride);
            assert_eq!(plan.window_length, window);

            for (i, &(s, e)) in plan.windows.iter().enumerate() {
                assert_eq!(s, i * stride, "start of window {i}");
                assert_eq!(e, (s + window).min(total), "end of window {i}");
                assert!(e > s);
                if i + 1 < plan.windows.len() {
                    assert_eq!(e, s + window, "only the last window may shrink");
                    // Consecutive windows overlap by exactly half a window.
                    let (s2, _) = plan.windows[i + 1];
                    assert_eq!(e - s2, stride, "overlap between windows {i} and {}", i + 1);
                }
            }
            let &(ls, le) = plan.windows.last().expect("non-empty plan");
            assert_eq!(le, total, "last window must close the sequence");
            assert!(le - ls > stride, "last window must exceed half a window");
            assert!(le - ls <= window);
        }
    }
    // One window exactly when the sequence equals the window.
    assert_eq!(plan_windows(16, 16).expect("plan").windows, vec![(0, 16)]);
    // Odd, undersized, and oversized window lengths are rejected.
    assert!(plan_windows(10, 3).is_err());
    assert!(plan_windows(10, 0).is_err());
    assert!(plan_windows(10, 12).is_err());
}

// ---------------------------------------------------------------------------
// Criterion 5: iteration-weighted loss arithmetic.
// ---------------------------------------------------------------------------

fn rows(t: usize, n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Tensor<f64> {
    let mut data = Vec::with_capacity(t * n * 3);
    for ti in 0..t {
        for ni in 0..n {
            for a in 0..3 {
                data.push(f(ti, ni, a));
            }
        }
    }
    Tensor::new(&[t * n, 3], data).expect("row tensor")
}

pub fn c05_loss_weights() {
    let gamma = 0.8f64;
    let (t, n) = (2, 3);
    let gt = rows(t, n, |_, _, _| 0.0);

    // Isolate each iteration's weight: all snapshots perfect except one with
    // unit per-row error, so the loss equals that iteration's weight.
    let weights = [0.512, 0.64, 0.8, 1.0];
    for k in 0..4 {
        let snaps: Vec<Tensor<f64>> = (0..4)
            .map(|j| rows(t, n, |_, _, a| if j == k && a == 0 { 1.0 } else { 0.0 }))
            .collect();
        let got = window_loss(&snaps, &gt, gamma).expect("window_loss");
        assert_close(got, weights[k], 1e-6, &format!("weight of iteration {k}"));
    }

    // Linearity across iterations: constant per-row errors (1, 2, 3, 4).
    let snaps: Vec<Tensor<f64>> =
        (1..=4).map(|k| rows(t, n, |_, _, a| if a == 0 { k as f64 } else { 0.0 })).collect();
    let got = window_loss(&snaps, &gt, gamma).expect("window_loss");
    let want = 0.512 * 1.0 + 0.64 * 2.0 + 0.8 * 3.0 + 1.0 * 4.0;
    assert_close(got, want, 1e-6, "weighted sum over constant-error snapshots");

    // Random snapshots against a hand-rolled reference.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC0_0005);
    for case in 0..120u32 {
        let t = rng.gen_range(1..=5);
        let n = rng.gen_range(1..=6);
        let gt = rows(t, n, |_, _, _| rng.gen::<f64>() * 2.0 - 1.0);
        let snaps: Vec<Tensor<f64>> =
            (0..4).map(|_| rows(t, n, |_, _, _| rng.gen::<f64>() * 2.0 - 1.0)).collect();

        let mut want = 0.0;
        for (k, snap) in snaps.iter().enumerate() {
            let mut mean = 0.0;
            for r in 0..t * n {
                let mut acc = 0.0;
                for a in 0..3 {
                    let d = snap.data()[r * 3 + a] - gt.data()[r * 3 + a];
                    acc += d * d;
                }
                mean += acc.sqrt();
            }
            want += weights[k] * mean / (t * n) as f64;
        }
        let got = window_loss(&snaps, &gt, 0.8).expect("window_loss");
        assert!(
            close(got, want, 1e-6),
            "case {case}: loss {got} vs reference {want}"
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion 8: metric sanity vector.
// ---------------------------------------------------------------------------

pub fn c08_metric_sanity() {
    // A constant 0.15 m offset on every prediction.
    let (t, n) = (4, 3);
    let mut gt_data = Vec::with_capacity(t * n * 3);
    let mut pred_data = Vec::with_capacity(t * n * 3);
    for tf in 0..t {
        for i in 0..n {
            let p = [tf as f64 * 0.3, i as f64 * 0.5, 1.0];
            gt_data.extend_from_slice(&p);
            pred_data.extend_from_slice(&[p[0] + 0.15, p[1], p[2]]);
        }
    }
    let gt = Tensor::new(&[t, n, 3], gt_data).expect("gt");
    let pred = Tensor::new(&[t, n, 3], pred_data).expect("pred");
    let rep = evaluate(&pred, &gt, &vec![true; t * n], &MetricsOptions::default())
        .expect("evaluate");

    assert!((rep.epe3d - 0.15).abs() < 1e-12, "epe3d {}", rep.epe3d);
    assert!((rep.mae3d - 0.15).abs() < 1e-12, "mae3d {}", rep.mae3d);
    let pcts: Vec<f64> = rep.delta.iter().map(|&(_, p)| p).collect();
    assert_eq!(pcts, vec![0.0, 100.0, 100.0, 100.0], "threshold accuracies");
    assert_eq!(rep.delta_avg, 75.0, "delta_avg");
    assert_eq!(rep.survival, 100.0, "survival");

    // The same vector must hold when the occlusion table is requested with a
    // fully visible grid: one bucket, same constant error.
    let opts = MetricsOptions {
        occlusion_buckets: Some(default_occlusion_buckets()),
        drift_checkpoints: Some(vec![0, t - 1]),
        ..MetricsOptions::default()
    };
    let rep = evaluate(&pred, &gt, &vec![true; t * n], &opts).expect("evaluate");
    let occ = rep.occlusion.expect("occlusion table");
    assert_eq!(occ.len(), 1, "only the zero-occlusion bucket is populated");
    assert_eq!(occ[0].0, "0");
    assert!((occ[0].1 - 0.15).abs() < 1e-12);
    for (_, e) in rep.drift.expect("drift table") {
        assert!((e - 0.15).abs() < 1e-12);
    }

    // Sanity of the bucket partition itself.
    let buckets = default_occlusion_buckets();
    for count in 0..64usize {
        assert_eq!(
            buckets.iter().filter(|b| b.contains(count)).count(),
            1,
            "count {count} must land in exactly one bucket"
        );
    }
    assert!(OcclusionBucket { lo: 5, hi: None }.contains(1_000_000));
}
