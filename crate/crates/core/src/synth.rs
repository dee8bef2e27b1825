//! Synthetic long-sequence scene generation with exact ground truth.
//!
//! Scenes combine analytically animated surfaces — rigid cuboid bodies, an
//! optional sinusoidally warping sheet, and a static background — sampled
//! independently at every frame so consecutive frames share no point
//! identity. Tracked anchors ride the same analytic motion and are injected
//! into each frame exactly while visible; an optional sweeping slab deletes
//! the measurements it covers and flips the anchors' visibility.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PointSet;
use crate::rng::{substream, substream_n};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fixed z-plane the warping sheet oscillates around.
const SHEET_Z: f64 = -1.5;
/// Sheet phase advance per frame (radians).
const SHEET_PHASE_RATE: f64 = 0.5;
/// Occluder slab half-extents (x, y, z).
const OCC_HALF: [f64; 3] = [0.8, 3.0, 1.25];
/// Occluder sweep endpoints along x.
const OCC_SWEEP: (f64, f64) = (-2.5, 2.5);
/// Attempts at resampling a surface point out of the occluder before
/// falling back to a background draw.
const OCC_RETRIES: usize = 256;
/// Scene half-extent: surfaces live inside [−3, 3]³.
const SCENE_HALF: f64 = 3.0;

/// Declarative scene description; equal specs generate identical records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    /// Sequence length T'.
    pub frames: usize,
    /// Measurements per frame (held exactly).
    pub points_per_frame: usize,
    /// Slice of each frame drawn from the static background.
    pub background_points: usize,
    /// Rigid cuboid bodies.
    pub bodies: usize,
    /// Cuboid half-extent range (meters).
    pub body_size: (f64, f64),
    /// Linear speed range (meters per frame).
    pub linear_speed: (f64, f64),
    /// Angular speed range (radians per frame).
    pub angular_speed: (f64, f64),
    /// Include the warping sheet surface.
    pub sheet: bool,
    /// Sheet warp amplitude (meters).
    pub sheet_amplitude: f64,
    /// Sheet warp spatial frequency (radians per meter).
    pub sheet_frequency: f64,
    /// Sweep a deleting slab across the scene.
    pub occluder: bool,
    /// Tracked ground-truth trajectories N_gt.
    pub trajectories: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            frames: 24,
            points_per_frame: 512,
            background_points: 128,
            bodies: 2,
            body_size: (0.3, 0.6),
            linear_speed: (0.01, 0.05),
            angular_speed: (0.02, 0.1),
            sheet: true,
            sheet_amplitude: 0.3,
            sheet_frequency: 1.5,
            occluder: false,
            trajectories: 256,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::arg("scene needs at least one frame"));
        }
        if self.points_per_frame == 0 {
            return Err(Error::arg("scene needs at least one point per frame"));
        }
        if self.trajectories == 0 {
            return Err(Error::arg("scene needs at least one tracked trajectory"));
        }
        if self.trajectories > self.points_per_frame {
            return Err(Error::arg(format!(
                "{} trajectories cannot fit into {}-point frames",
                self.trajectories, self.points_per_frame
            )));
        }
        if self.background_points > self.points_per_frame {
            return Err(Error::arg(format!(
                "background quota {} exceeds frame size {}",
                self.background_points, self.points_per_frame
            )));
        }
        let movers = self.bodies + usize::from(self.sheet);
        if movers == 0 && self.background_points < self.points_per_frame {
            return Err(Error::arg(
                "no moving surfaces: background quota must equal the frame size",
            ));
        }
        let ranges = [self.body_size, self.linear_speed, self.angular_speed];
        for (lo, hi) in ranges {
            if lo < 0.0 || hi < lo {
                return Err(Error::arg(format!("range ({lo}, {hi}) must satisfy 0 ≤ lo ≤ hi")));
            }
        }
        if self.bodies > 0 && self.body_size.0 <= 0.0 {
            return Err(Error::arg("body size range must be positive"));
        }
        if self.sheet && (self.sheet_amplitude < 0.0 || self.sheet_frequency <= 0.0) {
            return Err(Error::arg("sheet warp needs amplitude ≥ 0 and frequency > 0"));
        }
        Ok(())
    }
}

/// A generated sequence: per-frame clouds, exact trajectories, visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord<S> {
    pub spec: SceneSpec,
    /// T' independent per-frame measurement clouds.
    pub frames: Vec<PointSet<S>>,
    /// `[T', N_gt, 3]` analytic trajectory positions.
    pub gt: Tensor<S>,
    /// `visibility[t·N_gt + i]`: anchor `i` measurable at frame `t`.
    pub visibility: Vec<bool>,
}

impl<S: Scalar> SequenceRecord<S> {
    pub fn num_trajectories(&self) -> usize {
        self.spec.trajectories
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// Ground-truth position of anchor `i` at frame `t`.
    pub fn gt_position(&self, t: usize, i: usize) -> [S; 3] {
        let base = (t * self.spec.trajectories + i) * 3;
        let d = self.gt.data();
        [d[base], d[base + 1], d[base + 2]]
    }

    pub fn visible(&self, t: usize, i: usize) -> bool {
        self.visibility[t * self.spec.trajectories + i]
    }
}

/// One rigid body's drawn motion parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyMotion {
    pub center: [f64; 3],
    pub half_extent: f64,
    pub velocity: [f64; 3],
    pub axis: [f64; 3],
    pub angular_speed: f64,
}

/// Drawn scene internals, exposed for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDetails {
    pub bodies: Vec<BodyMotion>,
    pub sheet_phase: f64,
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    Body(usize),
    Sheet,
    Background,
}

/// Per-anchor sampling parameter, fixed for the whole sequence.
#[derive(Debug, Clone, Copy)]
enum AnchorParam {
    /// Offset from a body center in its rest pose.
    Local(usize, [f64; 3]),
    /// Sheet surface coordinates (u, v).
    Sheet(f64, f64),
    /// Static background position.
    Fixed([f64; 3]),
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            crate::rng::normal(rng, 0.0, 1.0),
            crate::rng::normal(rng, 0.0, 1.0),
            crate::rng::normal(rng, 0.0, 1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Rodrigues rotation of `v` around unit `axis` by `angle`.
fn rotate(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let k = axis;
    let cross = [
        k[1] * v[2] - k[2] * v[1],
        k[2] * v[0] - k[0] * v[2],
        k[0] * v[1] - k[1] * v[0],
    ];
    let dot = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
    let mut out = [0.0; 3];
    for a in 0..3 {
        out[a] = v[a] * c + cross[a] * s + k[a] * dot * (1.0 - c);
    }
    out
}

/// Position of a body-local rest offset at frame `t` (motion is evaluated
/// analytically from t — no per-frame accumulation).
fn body_position(body: &BodyMotion, local: [f64; 3], t: usize) -> [f64; 3] {
    let tt = t as f64;
    let rot = rotate(local, body.axis, tt * body.angular_speed);
    let mut out = [0.0; 3];
    for a in 0..3 {
        out[a] = (rot[a] + body.center[a]) + tt * body.velocity[a];
    }
    out
}

fn sheet_position(spec: &SceneSpec, phase0: f64, u: f64, v: f64, t: usize) -> [f64; 3] {
    let z = SHEET_Z
        + spec.sheet_amplitude * (spec.sheet_frequency * u + phase0 + SHEET_PHASE_RATE * t as f64).sin();
    [u, v, z]
}

fn occluder_contains(p: [f64; 3], t: usize, total: usize) -> bool {
    let progress = if total > 1 { t as f64 / (total - 1) as f64 } else { 0.0 };
    let cx = OCC_SWEEP.0 + (OCC_SWEEP.1 - OCC_SWEEP.0) * progress;
    (p[0] - cx).abs() <= OCC_HALF[0] && p[1].abs() <= OCC_HALF[1] && p[2].abs() <= OCC_HALF[2]
}

/// Evenly split `total` across `parts`, front slots absorbing the remainder.
fn split_evenly(total: usize, parts: usize) -> Vec<usize> {
    if parts == 0 {
        return Vec::new();
    }
    let base = total / parts;
    let rem = total % parts;
    (0..parts).map(|i| base + usize::from(i < rem)).collect()
}

/// Generate a sequence and also return the drawn scene internals.
pub fn generate_with_details<S: Scalar>(
    spec: &SceneSpec,
) -> Result<(SequenceRecord<S>, SceneDetails)> {
    spec.validate()?;
    let mut scene_rng = substream(spec.seed, "synth.scene");
    let bodies: Vec<BodyMotion> = (0..spec.bodies)
        .map(|_| {
            let center = [
                uniform(&mut scene_rng, -2.0, 2.0),
                uniform(&mut scene_rng, -2.0, 2.0),
                uniform(&mut scene_rng, -2.0, 2.0),
            ];
            let half_extent = uniform(&mut scene_rng, spec.body_size.0, spec.body_size.1);
            let dir = unit_vector(&mut scene_rng);
            let speed = uniform(&mut scene_rng, spec.linear_speed.0, spec.linear_speed.1);
            let axis = unit_vector(&mut scene_rng);
            let angular_speed =
                uniform(&mut scene_rng, spec.angular_speed.0, spec.angular_speed.1);
            BodyMotion {
                center,
                half_extent,
                velocity: [dir[0] * speed, dir[1] * speed, dir[2] * speed],
                axis,
                angular_speed,
            }
        })
        .collect();
    let sheet_phase = if spec.sheet {
        uniform(&mut scene_rng, 0.0, core::f64::consts::TAU)
    } else {
        0.0
    };
    let details = SceneDetails { bodies: bodies.clone(), sheet_phase };

    // Surface roster and per-frame sampling quota.
    let mut surfaces = vec![];
    for b in 0..spec.bodies {
        surfaces.push(Surface::Body(b));
    }
    if spec.sheet {
        surfaces.push(Surface::Sheet);
    }
    surfaces.push(Surface::Background);
    let movers = surfaces.len() - 1;
    let mut quota = split_evenly(spec.points_per_frame - spec.background_points, movers);
    quota.push(spec.background_points);

    // Allocate anchors proportionally to surface quotas, capped per surface.
    let mut anchor_counts = vec![0usize; surfaces.len()];
    {
        let mut assigned = 0;
        for (s, &q) in quota.iter().enumerate() {
            let share = spec.trajectories * q / spec.points_per_frame;
            let take = share.min(q);
            anchor_counts[s] = take;
            assigned += take;
        }
        let mut s = 0;
        while assigned < spec.trajectories {
            if anchor_counts[s] < quota[s] {
                anchor_counts[s] += 1;
                assigned += 1;
            }
            s = (s + 1) % surfaces.len();
        }
    }

    // Draw the fixed anchor parameters.
    let mut anchor_rng = substream(spec.seed, "synth.anchors");
    let draw_param = |surface: Surface, rng: &mut ChaCha8Rng| -> AnchorParam {
        match surface {
            Surface::Body(b) => {
                let h = bodies[b].half_extent;
                AnchorParam::Local(
                    b,
                    [uniform(rng, -h, h), uniform(rng, -h, h), uniform(rng, -h, h)],
                )
            }
            Surface::Sheet => AnchorParam::Sheet(
                uniform(rng, -SCENE_HALF, SCENE_HALF),
                uniform(rng, -SCENE_HALF, SCENE_HALF),
            ),
            Surface::Background => AnchorParam::Fixed([
                uniform(rng, -SCENE_HALF, SCENE_HALF),
                uniform(rng, -SCENE_HALF, SCENE_HALF),
                uniform(rng, -SCENE_HALF, SCENE_HALF),
            ]),
        }
    };
    let mut anchors: Vec<AnchorParam> = Vec::with_capacity(spec.trajectories);
    for (s, &count) in anchor_counts.iter().enumerate() {
        for _ in 0..count {
            anchors.push(draw_param(surfaces[s], &mut anchor_rng));
        }
    }

    let position_at = |param: &AnchorParam, t: usize| -> [f64; 3] {
        match *param {
            AnchorParam::Local(b, local) => body_position(&bodies[b], local, t),
            AnchorParam::Sheet(u, v) => sheet_position(spec, sheet_phase, u, v, t),
            AnchorParam::Fixed(p) => p,
        }
    };

    // Ground truth and visibility over the full horizon.
    let n_gt = spec.trajectories;
    let mut gt = Vec::with_capacity(spec.frames * n_gt * 3);
    let mut visibility = Vec::with_capacity(spec.frames * n_gt);
    for t in 0..spec.frames {
        for anchor in &anchors {
            let p = position_at(anchor, t);
            gt.extend(p.iter().map(|&x| S::from_f64(x)));
            visibility.push(!(spec.occluder && occluder_contains(p, t, spec.frames)));
        }
    }

    // Per-frame clouds: visible anchors injected exactly, the rest sampled
    // fresh; samples landing in the occluder are rejected and retried, with
    // a background fallback so frame sizes stay exact.
    let surface_of_anchor: Vec<usize> = {
        let mut owners = Vec::with_capacity(n_gt);
        for (s, &count) in anchor_counts.iter().enumerate() {
            owners.extend(core::iter::repeat(s).take(count));
        }
        owners
    };
    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut coords: Vec<[S; 3]> = Vec::with_capacity(spec.points_per_frame);
        let mut visible_per_surface = vec![0usize; surfaces.len()];
        for (i, anchor) in anchors.iter().enumerate() {
            if visibility[t * n_gt + i] {
                let p = position_at(anchor, t);
                coords.push([S::from_f64(p[0]), S::from_f64(p[1]), S::from_f64(p[2])]);
                visible_per_surface[surface_of_anchor[i]] += 1;
            }
        }
        let mut deficit = 0usize;
        let mut fills = vec![0usize; surfaces.len()];
        for s in 0..surfaces.len() {
            if visible_per_surface[s] > quota[s] {
                fills[s] = 0;
                deficit += visible_per_surface[s] - quota[s];
            } else {
                fills[s] = quota[s] - visible_per_surface[s];
            }
        }
        // Over-injected surfaces shrink the background fill to keep the
        // frame size exact.
        let bg = surfaces.len() - 1;
        fills[bg] = fills[bg].saturating_sub(deficit);

        for (s, surface) in surfaces.iter().enumerate() {
            let mut rng = substream_n(
                spec.seed,
                "synth.fill",
                (t * surfaces.len() + s) as u64,
            );
            for _ in 0..fills[s] {
                let mut p = [0.0; 3];
                let mut placed = false;
                for _ in 0..OCC_RETRIES {
                    let param = draw_param(*surface, &mut rng);
                    p = position_at(&param, t);
                    if !(spec.occluder && occluder_contains(p, t, spec.frames)) {
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    // Surface fully covered: fall back to an unoccluded
                    // background draw (the slab never covers the whole scene).
                    loop {
                        p = [
                            uniform(&mut rng, -SCENE_HALF, SCENE_HALF),
                            uniform(&mut rng, -SCENE_HALF, SCENE_HALF),
                            uniform(&mut rng, -SCENE_HALF, SCENE_HALF),
                        ];
                        if !(spec.occluder && occluder_contains(p, t, spec.frames)) {
                            break;
                        }
                    }
                }
                coords.push([S::from_f64(p[0]), S::from_f64(p[1]), S::from_f64(p[2])]);
            }
        }
        frames.push(PointSet::new(coords)?);
    }

    let record = SequenceRecord {
        spec: spec.clone(),
        frames,
        gt: Tensor::new(&[spec.frames, n_gt, 3], gt)?,
        visibility,
    };
    Ok((record, details))
}

/// Generate a sequence from a spec (seed-deterministic).
pub fn generate<S: Scalar>(spec: &SceneSpec) -> Result<SequenceRecord<S>> {
    generate_with_details(spec).map(|(record, _)| record)
}

/// A sampled query set with its aligned ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySample<S> {
    /// Picked anchor indices into the record's trajectories, ascending.
    pub anchor_indices: Vec<usize>,
    /// Query positions at the sampled frame.
    pub queries: PointSet<S>,
    /// `[T', n, 3]` ground-truth slice aligned with `queries`.
    pub gt: Tensor<S>,
    /// `[T'·n]` visibility slice aligned with `queries`.
    pub visibility: Vec<bool>,
}

/// Sample `n` distinct anchors visible at `frame` (seeded), returning their
/// positions there plus the aligned truth slice.
pub fn sample_queries<S: Scalar>(
    record: &SequenceRecord<S>,
    n: usize,
    frame: usize,
    seed: u64,
) -> Result<QuerySample<S>> {
    let n_gt = record.num_trajectories();
    let total = record.num_frames();
    if frame >= total {
        return Err(Error::arg(format!("query frame {frame} outside 0..{total}")));
    }
    if n == 0 {
        return Err(Error::arg("query sample must be non-empty"));
    }
    let visible: Vec<usize> = (0..n_gt).filter(|&i| record.visible(frame, i)).collect();
    if n > visible.len() {
        return Err(Error::arg(format!(
            "wanted {n} queries but only {} anchors are visible at frame {frame}",
            visible.len()
        )));
    }

    let mut picked: Vec<usize> = if n == visible.len() {
        visible
    } else {
        let mut pool = visible;
        let mut rng = substream(seed, "synth.sample_queries");
        for i in 0..n {
            let j = i + rng.gen_range(0..pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(n);
        pool.sort_unstable();
        pool
    };
    picked.sort_unstable();

    let coords = picked.iter().map(|&i| record.gt_position(frame, i)).collect();
    let mut gt = Vec::with_capacity(total * n * 3);
    let mut visibility = Vec::with_capacity(total * n);
    for t in 0..total {
        for &i in &picked {
            let p = record.gt_position(t, i);
            gt.extend_from_slice(&p);
            visibility.push(record.visible(t, i));
        }
    }
    Ok(QuerySample {
        anchor_indices: picked,
        queries: PointSet::new(coords)?,
        gt: Tensor::new(&[total, n, 3], gt)?,
        visibility,
    })
}
