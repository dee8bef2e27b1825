//! Trajectory evaluation: end-point error, threshold accuracies, median
//! trajectory error, survival, temporal drift, and occlusion breakdowns.
//!
//! All operations take `[T, N, 3]` position grids (frame-major) and report
//! distances in meters and rates in percent.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How the `mae3d` field is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaeMode {
    /// Median over trajectories of each trajectory's mean error (default).
    MedianOfTrajectoryMeans,
    /// Plain mean of all per-point errors.
    MeanAbsolute,
}

/// How the `survival` field is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurvivalMode {
    /// Average fraction of frames before the first exceedance (default).
    Fractional,
    /// Fraction of trajectories that never exceed the threshold.
    Binary,
}

/// Inclusive occluded-frame-count range: `lo..=hi`, `hi = None` meaning
/// unbounded above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcclusionBucket {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl OcclusionBucket {
    pub fn contains(&self, count: usize) -> bool {
        count >= self.lo && self.hi.map_or(true, |h| count <= h)
    }

    pub fn label(&self) -> String {
        match self.hi {
            Some(h) if h == self.lo => alloc::format!("{}", self.lo),
            Some(h) => alloc::format!("{}-{}", self.lo, h),
            None => alloc::format!("{}+", self.lo),
        }
    }
}

/// Evaluation options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsOptions {
    /// Frame left out of every metric (typically the query frame, whose
    /// error is zero by construction). Default: include all frames.
    pub exclude_frame: Option<usize>,
    pub mae_mode: MaeMode,
    pub survival_mode: SurvivalMode,
    /// Survival failure threshold in meters.
    pub survival_threshold: f64,
    /// Accuracy thresholds in meters (strict `< x`).
    pub delta_thresholds: Vec<f64>,
    /// Frames at which to report drift (restricted end-point error).
    pub drift_checkpoints: Option<Vec<usize>>,
    /// Occluded-frame-count buckets for the occlusion table.
    pub occlusion_buckets: Option<Vec<OcclusionBucket>>,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            exclude_frame: None,
            mae_mode: MaeMode::MedianOfTrajectoryMeans,
            survival_mode: SurvivalMode::Fractional,
            survival_threshold: 0.5,
            delta_thresholds: alloc::vec![0.10, 0.20, 0.40, 0.80],
            drift_checkpoints: None,
            occlusion_buckets: None,
        }
    }
}

/// Default occlusion buckets: {0}, {1–2}, {3–4}, {5+}.
pub fn default_occlusion_buckets() -> Vec<OcclusionBucket> {
    alloc::vec![
        OcclusionBucket { lo: 0, hi: Some(0) },
        OcclusionBucket { lo: 1, hi: Some(2) },
        OcclusionBucket { lo: 3, hi: Some(4) },
        OcclusionBucket { lo: 5, hi: None },
    ]
}

/// Default drift checkpoints.
pub fn default_drift_checkpoints() -> Vec<usize> {
    alloc::vec![2, 8, 24, 40]
}

/// Evaluation summary. Distances in meters, rates in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epe3d: f64,
    /// `(threshold, percentage)` pairs, in threshold order.
    pub delta: Vec<(f64, f64)>,
    pub delta_avg: f64,
    pub mae3d: f64,
    pub survival: f64,
    /// `(frame, end-point error)` pairs when drift checkpoints were given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<(usize, f64)>>,
    /// `(bucket label, mean error)` for each non-empty bucket.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<Vec<(String, f64)>>,
}

/// Per-point Euclidean errors as an f64 grid, plus the grid dimensions.
fn error_grid<S: Scalar>(pred: &Tensor<S>, gt: &Tensor<S>) -> Result<(Vec<f64>, usize, usize)> {
    let sp = pred.shape();
    if sp.len() != 3 || sp[2] != 3 {
        return Err(Error::arg(alloc::format!("predictions {sp:?}, want [T, N, 3]")));
    }
    if gt.shape() != sp {
        return Err(Error::arg(alloc::format!(
            "ground truth {:?} does not match predictions {sp:?}",
            gt.shape()
        )));
    }
    let (t, n) = (sp[0], sp[1]);
    let mut errors = Vec::with_capacity(t * n);
    for r in 0..t * n {
        let p = &pred.data()[r * 3..r * 3 + 3];
        let q = &gt.data()[r * 3..r * 3 + 3];
        let mut acc = 0.0f64;
        for a in 0..3 {
            let d = p[a].to_f64() - q[a].to_f64();
            acc += d * d;
        }
        errors.push(acc.sqrt());
    }
    Ok((errors, t, n))
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let m = values.len();
    if m == 0 {
        return 0.0;
    }
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Evaluate predictions against ground truth.
///
/// `visibility[t·N + i]` says whether query `i` was visible at frame `t`; it
/// feeds only the occlusion table (occluded frames stay in every metric).
pub fn evaluate<S: Scalar>(
    pred: &Tensor<S>,
    gt: &Tensor<S>,
    visibility: &[bool],
    opts: &MetricsOptions,
) -> Result<MetricsReport> {
    let (errors, t, n) = error_grid(pred, gt)?;
    if visibility.len() != t * n {
        return Err(Error::arg(alloc::format!(
            "visibility holds {} flags, want {t}×{n}",
            visibility.len()
        )));
    }
    if let Some(f) = opts.exclude_frame {
        if f >= t {
            return Err(Error::arg(alloc::format!("excluded frame {f} outside 0..{t}")));
        }
    }
    let frames: Vec<usize> = (0..t).filter(|&f| Some(f) != opts.exclude_frame).collect();
    if frames.is_empty() {
        return Err(Error::arg("no frames left to evaluate"));
    }

    let total = (frames.len() * n) as f64;
    let mut epe = 0.0;
    let mut below = alloc::vec![0usize; opts.delta_thresholds.len()];
    for &f in &frames {
        for i in 0..n {
            let e = errors[f * n + i];
            epe += e;
            for (bi, &x) in opts.delta_thresholds.iter().enumerate() {
                if e < x {
                    below[bi] += 1;
                }
            }
        }
    }
    epe /= total;
    let delta: Vec<(f64, f64)> = opts
        .delta_thresholds
        .iter()
        .zip(&below)
        .map(|(&x, &c)| (x, 100.0 * c as f64 / total))
        .collect();
    let delta_avg = if delta.is_empty() {
        0.0
    } else {
        delta.iter().map(|&(_, p)| p).sum::<f64>() / delta.len() as f64
    };

    let traj_means: Vec<f64> = (0..n)
        .map(|i| frames.iter().map(|&f| errors[f * n + i]).sum::<f64>() / frames.len() as f64)
        .collect();
    let mae3d = match opts.mae_mode {
        MaeMode::MedianOfTrajectoryMeans => median(traj_means),
        MaeMode::MeanAbsolute => epe,
    };

    let mut survival_acc = 0.0;
    for i in 0..n {
        let mut alive = frames.len();
        for (pos, &f) in frames.iter().enumerate() {
            if errors[f * n + i] > opts.survival_threshold {
                alive = pos;
                break;
            }
        }
        survival_acc += match opts.survival_mode {
            SurvivalMode::Fractional => alive as f64 / frames.len() as f64,
            SurvivalMode::Binary => {
                if alive == frames.len() {
                    1.0
                } else {
                    0.0
                }
            }
        };
    }
    let survival = 100.0 * survival_acc / n as f64;

    let drift = match &opts.drift_checkpoints {
        Some(cps) => Some(drift_table(pred, gt, cps)?),
        None => None,
    };
    let occlusion = match &opts.occlusion_buckets {
        Some(buckets) => Some(
            occlusion_breakdown(pred, gt, visibility, buckets)?
                .into_iter()
                .filter_map(|(b, e)| e.map(|e| (b.label(), e)))
                .collect(),
        ),
        None => None,
    };

    Ok(MetricsReport { epe3d: epe, delta, delta_avg, mae3d, survival, drift, occlusion })
}

/// End-point error restricted to each checkpoint frame.
pub fn drift_table<S: Scalar>(
    pred: &Tensor<S>,
    gt: &Tensor<S>,
    checkpoints: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let (errors, t, n) = error_grid(pred, gt)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &f in checkpoints {
        if f >= t {
            return Err(Error::arg(alloc::format!("drift checkpoint {f} outside 0..{t}")));
        }
        let e = errors[f * n..(f + 1) * n].iter().sum::<f64>() / n as f64;
        out.push((f, e));
    }
    Ok(out)
}

/// Mean end-point error per occluded-frame-count bucket; empty buckets
/// report `None`.
///
/// Buckets must be disjoint and cover every possible count.
pub fn occlusion_breakdown<S: Scalar>(
    pred: &Tensor<S>,
    gt: &Tensor<S>,
    visibility: &[bool],
    buckets: &[OcclusionBucket],
) -> Result<Vec<(OcclusionBucket, Option<f64>)>> {
    let (errors, t, n) = error_grid(pred, gt)?;
    if visibility.len() != t * n {
        return Err(Error::arg(alloc::format!(
            "visibility holds {} flags, want {t}×{n}",
            visibility.len()
        )));
    }
    // Coverage and disjointness: sorted by lower bound, the ranges must abut
    // exactly, start at 0, and end unbounded.
    let mut sorted = buckets.to_vec();
    if sorted.is_empty() {
        return Err(Error::arg("no occlusion buckets given"));
    }
    sorted.sort_by_key(|b| b.lo);
    if sorted[0].lo != 0 {
        return Err(Error::arg("occlusion buckets must start at 0"));
    }
    for w in sorted.windows(2) {
        match w[0].hi {
            None => return Err(Error::arg("unbounded occlusion bucket must come last")),
            Some(h) if h + 1 != w[1].lo => {
                return Err(Error::arg(alloc::format!(
                    "occlusion buckets {} and {} overlap or leave a gap",
                    w[0].label(),
                    w[1].label()
                )))
            }
            _ => {}
        }
    }
    if sorted.last().expect("non-empty").hi.is_some() {
        return Err(Error::arg("occlusion buckets must cover every count (last must be open)"));
    }

    let mut sums = alloc::vec![0.0f64; buckets.len()];
    let mut counts = alloc::vec![0usize; buckets.len()];
    for i in 0..n {
        let occluded = (0..t).filter(|&f| !visibility[f * n + i]).count();
        let b = buckets
            .iter()
            .position(|b| b.contains(occluded))
            .expect("buckets cover every count");
        for f in 0..t {
            sums[b] += errors[f * n + i];
        }
        counts[b] += t;
    }
    Ok(buckets
        .iter()
        .zip(sums.iter().zip(&counts))
        .map(|(&b, (&s, &c))| (b, if c == 0 { None } else { Some(s / c as f64) }))
        .collect())
}
