//! Pipeline orchestration: trajectory initialization, the iterative
//! refinement loop over one window, sliding-window inference over long
//! sequences, and auxiliary-query injection.
//!
//! Trajectory grids use the same flat frame-major layout as the token
//! module: row `t·N + i` is query `i` at frame `t`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backbone::{encode_frame, encode_sequence, BackboneConfig};
use crate::correlation::{correlate_frame, CorrelationConfig};
use crate::error::{Error, Result};
use crate::geom::{PointSet, IDW_EPS};
use crate::graph::{Graph, NodeId};
use crate::nn::ParamStore;
use crate::scalar::Scalar;
use crate::sttu::{build_tokens, predict_updates, spatio_temporal_transform, SttuConfig};
use crate::tensor::{matmul, Tensor};

/// Auxiliary-query selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxMode {
    /// No extra queries.
    None,
    /// Nearest frame points around each original query.
    LocalKnn,
    /// Farthest-point sample of the anchor frame.
    GlobalFps,
    /// Seeded uniform sample of the anchor frame.
    GlobalRandom,
    /// Budget split evenly between local KNN and global FPS.
    KnnPlusFps,
    /// Budget split evenly between local KNN and global random.
    KnnPlusRandom,
}

/// Auxiliary-query configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxiliaryConfig {
    pub mode: AuxMode,
    /// Total auxiliary budget (ignored for mode `None`).
    pub count: usize,
    /// Seed for the random sampling modes.
    pub seed: u64,
}

impl Default for AuxiliaryConfig {
    fn default() -> Self {
        AuxiliaryConfig { mode: AuxMode::None, count: 1024, seed: 0 }
    }
}

/// Full tracking configuration: window geometry, refinement depth, and the
/// sub-module hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Frames per window (even).
    pub window_length: usize,
    /// Refinement iterations K per window.
    pub iterations: usize,
    /// Neighbors used to interpolate initial query features.
    pub init_knn: usize,
    pub backbone: BackboneConfig,
    pub correlation: CorrelationConfig,
    pub sttu: SttuConfig,
    pub auxiliary: AuxiliaryConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            window_length: 16,
            iterations: 4,
            init_knn: 3,
            backbone: BackboneConfig::default(),
            correlation: CorrelationConfig::default(),
            sttu: SttuConfig::default(),
            auxiliary: AuxiliaryConfig::default(),
        }
    }
}

impl TrackerConfig {
    /// Motion-token width implied by the sub-module widths.
    pub fn token_width(&self) -> usize {
        self.correlation.width + self.backbone.channels + self.sttu.flow_embed_width
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length < 2 || self.window_length % 2 != 0 {
            return Err(Error::config(format!(
                "window length {} must be even and at least 2",
                self.window_length
            )));
        }
        if self.iterations == 0 {
            return Err(Error::config("refinement needs at least one iteration"));
        }
        if self.init_knn == 0 {
            return Err(Error::config("feature initialization needs at least one neighbor"));
        }
        self.correlation.validate()?;
        self.sttu.validate()?;
        let d = self.token_width();
        if d % self.sttu.heads != 0 {
            return Err(Error::config(format!(
                "token width {d} (fusion {} + channels {} + flow {}) not divisible by {} heads",
                self.correlation.width,
                self.backbone.channels,
                self.sttu.flow_embed_width,
                self.sttu.heads
            )));
        }
        Ok(())
    }
}

/// Trajectory estimates at rest (outside any graph).
#[derive(Debug, Clone)]
pub struct TrajectoryState<S> {
    /// `[T·N, 3]` positions, frame-major.
    pub q_xyz: Tensor<S>,
    /// `[T·N, C]` features, frame-major.
    pub q_feat: Tensor<S>,
    /// Completed refinement iterations.
    pub iteration: usize,
    /// Global frame the queries originate from.
    pub query_frame: usize,
    /// Frames in the window.
    pub t: usize,
    /// Queries per frame.
    pub n: usize,
}

impl<S: Scalar> TrajectoryState<S> {
    /// Position of query `i` at window frame `t`.
    pub fn position(&self, t: usize, i: usize) -> [S; 3] {
        let row = self.q_xyz.row(t * self.n + i);
        [row[0], row[1], row[2]]
    }
}

/// Sliding-window schedule over a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub window_length: usize,
    /// Start-to-start distance (half the window).
    pub stride: usize,
    /// Half-open `[start, end)` frame ranges, in processing order.
    pub windows: Vec<(usize, usize)>,
}

/// Plan overlapping windows over `total` frames: starts at multiples of
/// `window/2`, each window `window` frames long, the last clamped to end at
/// `total`.
pub fn plan_windows(total: usize, window: usize) -> Result<WindowPlan> {
    if window < 2 || window % 2 != 0 {
        return Err(Error::arg(format!("window length {window} must be even and at least 2")));
    }
    if window > total {
        return Err(Error::arg(format!(
            "window length {window} exceeds sequence length {total}"
        )));
    }
    let stride = window / 2;
    // Smallest W with (W−1)·stride + window ≥ total.
    let count = (2 * total - window).div_ceil(window);
    let windows = (0..count)
        .map(|i| {
            let start = i * stride;
            (start, usize::min(start + window, total))
        })
        .collect();
    Ok(WindowPlan { window_length: window, stride, windows })
}

/// Append auxiliary queries drawn from `frame` according to `cfg`.
///
/// Returns the augmented query set and a mask that is true exactly on the
/// original queries (which always come first).
pub fn inject_auxiliary<S: Scalar>(
    queries: &PointSet<S>,
    frame: &PointSet<S>,
    cfg: &AuxiliaryConfig,
) -> Result<(PointSet<S>, Vec<bool>)> {
    let n = queries.len();
    if cfg.mode == AuxMode::None {
        return Ok((queries.clone(), vec![true; n]));
    }
    if cfg.count > frame.len() {
        return Err(Error::arg(format!(
            "auxiliary budget {} exceeds the {}-point anchor frame",
            cfg.count,
            frame.len()
        )));
    }
    let (local_budget, global_budget) = match cfg.mode {
        AuxMode::None => unreachable!(),
        AuxMode::LocalKnn => (cfg.count, 0),
        AuxMode::GlobalFps | AuxMode::GlobalRandom => (0, cfg.count),
        AuxMode::KnnPlusFps | AuxMode::KnnPlusRandom => {
            (cfg.count / 2, cfg.count - cfg.count / 2)
        }
    };

    let mut picked: Vec<usize> = Vec::with_capacity(cfg.count);
    if local_budget > 0 {
        // Round-robin over neighbor ranks so the budget is spread evenly
        // across queries; duplicates are skipped.
        let kmax = local_budget.min(frame.len());
        let nbrs = frame.knn_query(queries, kmax)?;
        let mut seen = vec![false; frame.len()];
        'fill: for rank in 0..kmax {
            for nb in &nbrs {
                let j = nb.indices[rank];
                if !seen[j] {
                    seen[j] = true;
                    picked.push(j);
                    if picked.len() == local_budget {
                        break 'fill;
                    }
                }
            }
        }
    }
    if global_budget > 0 {
        let idx = match cfg.mode {
            AuxMode::GlobalFps | AuxMode::KnnPlusFps => frame.farthest_point_sample(global_budget, 0)?,
            _ => frame.random_subsample(global_budget, cfg.seed)?,
        };
        picked.extend(idx);
    }

    let mut coords = Vec::with_capacity(n + picked.len());
    for i in 0..n {
        coords.push(queries.get(i));
    }
    for &j in &picked {
        coords.push(frame.get(j));
    }
    let mut mask = vec![true; n];
    mask.extend(core::iter::repeat(false).take(picked.len()));
    Ok((PointSet::new(coords)?, mask))
}

/// Dense `[n_q, n_f]` inverse-distance weight matrix over each query's `k`
/// nearest frame points (weights `1/(d + eps)`, normalized per row).
fn idw_weight_matrix<S: Scalar>(
    frame: &PointSet<S>,
    queries: &PointSet<S>,
    k: usize,
) -> Result<Vec<S>> {
    let (nq, nf) = (queries.len(), frame.len());
    let k = k.min(nf);
    let nbrs = frame.knn_query(queries, k)?;
    let eps = S::from_f64(IDW_EPS);
    let mut w = vec![S::zero(); nq * nf];
    for (qi, nb) in nbrs.iter().enumerate() {
        let mut total = S::zero();
        for &d in &nb.distances {
            total = total + S::one() / (d + eps);
        }
        for (&j, &d) in nb.indices.iter().zip(&nb.distances) {
            w[qi * nf + j] = (S::one() / (d + eps)) / total;
        }
    }
    Ok(w)
}

/// Replicate each of `n` rows across `t` frames in frame-major order.
fn replicate_rows<S: Scalar>(rows: &[S], n: usize, cols: usize, t: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(t * n * cols);
    for _ in 0..t {
        out.extend_from_slice(&rows[..n * cols]);
    }
    out
}

/// Build the initial trajectory state for a window: query positions
/// replicated across all frames, features interpolated from the query
/// frame's encoded features and replicated likewise.
pub fn init_trajectories<S: Scalar>(
    queries: &PointSet<S>,
    query_frame: usize,
    frames: &[PointSet<S>],
    store: &mut ParamStore<S>,
    cfg: &TrackerConfig,
) -> Result<TrajectoryState<S>> {
    let t = frames.len();
    if query_frame >= t {
        return Err(Error::arg(format!(
            "query frame {query_frame} outside the {t}-frame window"
        )));
    }
    let n = queries.len();
    let c = cfg.backbone.channels;

    let mut g = Graph::new();
    let enc = encode_frame(&mut g, store, &frames[query_frame], &cfg.backbone)?;
    let w = idw_weight_matrix(&enc.points, queries, cfg.init_knn)?;
    let feat0 = matmul(&w, g.value(enc.feats).data(), n, enc.points.len(), c);

    let q_xyz = Tensor::new(&[t * n, 3], replicate_rows(queries.flat(), n, 3, t))?;
    let q_feat = Tensor::new(&[t * n, c], replicate_rows(&feat0, n, c, t))?;
    Ok(TrajectoryState { q_xyz, q_feat, iteration: 0, query_frame, t, n })
}

/// How a window's trajectories start.
pub enum WindowInit<'a, S> {
    /// Lift an at-rest state into the graph as constants.
    State(&'a TrajectoryState<S>),
    /// Interpolate features on-graph from the query frame (gradients reach
    /// the frame encoder through the initialization).
    Queries { queries: &'a PointSet<S>, query_frame: usize },
}

/// Graph-side result of one window's refinement.
pub struct WindowRollout {
    /// Position grid after each iteration (`K` nodes, each `[T·N, 3]`).
    pub snapshots: Vec<NodeId>,
    /// Final positions (equal to the last snapshot).
    pub q_xyz: NodeId,
    /// Final features.
    pub q_feat: NodeId,
    /// Initial positions the flow embedding is anchored to.
    pub q_xyz0: NodeId,
    pub t: usize,
    pub n: usize,
}

/// Run the K-iteration refinement loop for one window inside an existing
/// graph, so callers can attach losses to the returned nodes.
pub fn run_window_graph<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    cfg: &TrackerConfig,
    frames: &[PointSet<S>],
    init: WindowInit<'_, S>,
) -> Result<WindowRollout> {
    cfg.validate()?;
    let t = frames.len();
    if t == 0 {
        return Err(Error::arg("window has no frames"));
    }
    let enc = encode_sequence(g, store, frames, &cfg.backbone)?;
    let c = cfg.backbone.channels;

    let (q_xyz0, q_feat0, n) = match init {
        WindowInit::State(state) => {
            if state.t != t {
                return Err(Error::arg(format!(
                    "state spans {} frames, window has {t}",
                    state.t
                )));
            }
            if state.iteration != 0 {
                return Err(Error::arg(format!(
                    "window expects a fresh state, got iteration {}",
                    state.iteration
                )));
            }
            if state.q_feat.shape() != [t * state.n, c] {
                return Err(Error::arg(format!(
                    "state features {:?} incompatible with {c} channels",
                    state.q_feat.shape()
                )));
            }
            let xyz = g.input(state.q_xyz.clone());
            let feat = g.input(state.q_feat.clone());
            (xyz, feat, state.n)
        }
        WindowInit::Queries { queries, query_frame } => {
            if query_frame >= t {
                return Err(Error::arg(format!(
                    "query frame {query_frame} outside the {t}-frame window"
                )));
            }
            let n = queries.len();
            let qf = &enc[query_frame];
            let w = idw_weight_matrix(&qf.points, queries, cfg.init_knn)?;
            let w_node = g.input(Tensor::new(&[n, qf.points.len()], w)?);
            let feat_rows = g.matmul(w_node, qf.feats)?;
            let rep_idx: Vec<usize> = (0..t * n).map(|r| r % n).collect();
            let feat = g.gather_rows(feat_rows, &rep_idx)?;
            let xyz = g.input(Tensor::new(&[t * n, 3], replicate_rows(queries.flat(), n, 3, t))?);
            (xyz, feat, n)
        }
    };

    let timestamps: Vec<usize> = (0..t).collect();
    let mut q_xyz = q_xyz0;
    let mut q_feat = q_feat0;
    let mut snapshots = Vec::with_capacity(cfg.iterations);
    for k in 0..cfg.iterations {
        let mut fused = Vec::with_capacity(t);
        for (tf, frame) in enc.iter().enumerate() {
            let feat_t = g.slice(q_feat, 0, tf * n, n)?;
            let xyz_t = g.slice(q_xyz, 0, tf * n, n)?;
            let (_, f) = correlate_frame(g, store, &cfg.correlation, feat_t, xyz_t, frame)?;
            fused.push(f);
        }
        let c_fuse = g.concat(&fused, 0)?;
        let tok = build_tokens(g, store, &cfg.sttu, c_fuse, q_feat, q_xyz, q_xyz0, &timestamps, n)?;
        let tok = spatio_temporal_transform(g, store, &cfg.sttu, &tok)?;
        let (dx, df) = predict_updates(g, store, &cfg.sttu, &tok, c)?;
        q_xyz = g.add(q_xyz, dx)?;
        q_feat = g.add(q_feat, df)?;
        if !g.value(q_xyz).is_finite() || !g.value(q_feat).is_finite() {
            return Err(Error::NonFinite(format!(
                "trajectory update produced non-finite values at iteration {}",
                k + 1
            )));
        }
        snapshots.push(q_xyz);
    }
    Ok(WindowRollout { snapshots, q_xyz, q_feat, q_xyz0, t, n })
}

/// Refine one window from an at-rest state: returns the final state and the
/// per-iteration position grids.
pub fn run_window<S: Scalar>(
    state: &TrajectoryState<S>,
    frames: &[PointSet<S>],
    store: &mut ParamStore<S>,
    cfg: &TrackerConfig,
) -> Result<(TrajectoryState<S>, Vec<Tensor<S>>)> {
    let mut g = Graph::new();
    let rollout = run_window_graph(&mut g, store, cfg, frames, WindowInit::State(state))?;
    let snapshots = rollout.snapshots.iter().map(|&id| g.value(id).clone()).collect();
    let final_state = TrajectoryState {
        q_xyz: g.value(rollout.q_xyz).clone(),
        q_feat: g.value(rollout.q_feat).clone(),
        iteration: cfg.iterations,
        query_frame: state.query_frame,
        t: state.t,
        n: state.n,
    };
    Ok((final_state, snapshots))
}

/// Carry a finished window's estimates into the next window's initial state:
/// overlapping frames copy their estimate, frames past the overlap repeat
/// the last overlapped frame's estimate.
pub fn carry_state<S: Scalar>(
    prev: &TrajectoryState<S>,
    prev_span: (usize, usize),
    next_span: (usize, usize),
    c: usize,
) -> Result<TrajectoryState<S>> {
    let (ps, pe) = prev_span;
    let (ns, ne) = next_span;
    let n = prev.n;
    let t_next = ne - ns;
    let mut xyz = Vec::with_capacity(t_next * n * 3);
    let mut feat = Vec::with_capacity(t_next * n * c);
    for f in ns..ne {
        let src = if f < pe { f - ps } else { pe - 1 - ps };
        xyz.extend_from_slice(&prev.q_xyz.data()[src * n * 3..(src + 1) * n * 3]);
        feat.extend_from_slice(&prev.q_feat.data()[src * n * c..(src + 1) * n * c]);
    }
    Ok(TrajectoryState {
        q_xyz: Tensor::new(&[t_next * n, 3], xyz)?,
        q_feat: Tensor::new(&[t_next * n, c], feat)?,
        iteration: 0,
        query_frame: prev.query_frame,
        t: t_next,
        n,
    })
}

/// Track `queries` (given at `query_frame`) through the whole sequence with
/// overlapping windows. Returns a `[T', N, 3]` trajectory tensor; auxiliary
/// queries are appended for context and stripped from the result.
pub fn track_sequence<S: Scalar>(
    frames: &[PointSet<S>],
    queries: &PointSet<S>,
    query_frame: usize,
    store: &mut ParamStore<S>,
    cfg: &TrackerConfig,
) -> Result<Tensor<S>> {
    cfg.validate()?;
    let total = frames.len();
    let plan = plan_windows(total, cfg.window_length)?;
    if query_frame >= cfg.window_length {
        return Err(Error::arg(format!(
            "query frame {query_frame} must lie inside the first {}-frame window",
            cfg.window_length
        )));
    }
    let (aug, mask) = inject_auxiliary(queries, &frames[query_frame], &cfg.auxiliary)?;
    let keep: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| if m { Some(i) } else { None })
        .collect();
    let n_out = keep.len();
    let c = cfg.backbone.channels;

    let mut out = vec![S::zero(); total * n_out * 3];
    let mut state = {
        let (s, e) = plan.windows[0];
        init_trajectories(&aug, query_frame, &frames[s..e], store, cfg)?
    };
    let mut prev_span = plan.windows[0];
    for (w, &(s, e)) in plan.windows.iter().enumerate() {
        if w > 0 {
            state = carry_state(&state, prev_span, (s, e), c)?;
        }
        let (final_state, _) = run_window(&state, &frames[s..e], store, cfg)?;
        // Later windows overwrite the overlapped half.
        for tf in 0..(e - s) {
            let frame = s + tf;
            for (oi, &qi) in keep.iter().enumerate() {
                let src = (tf * final_state.n + qi) * 3;
                let dst = (frame * n_out + oi) * 3;
                out[dst..dst + 3].copy_from_slice(&final_state.q_xyz.data()[src..src + 3]);
            }
        }
        state = final_state;
        prev_span = (s, e);
    }
    Tensor::new(&[total, n_out, 3], out)
}
