//! Geometric-similarity correlation between trajectory features and frame
//! feature maps: truncated top-M storage, a point branch over spatial
//! neighbors, a multi-radius voxel branch, and their fused output.
//!
//! Similarity is the scaled dot product `⟨q, f⟩/√C`. Selection decisions
//! (top-M truncation, spatial nearest neighbors, voxel memberships) are made
//! from forward values and treated as constants; gradients flow through the
//! selected similarity values and through the trajectory position via the
//! point branch's relative offsets.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backbone::FrameFeatures;
use crate::error::{Error, Result};
use crate::geom::{dist2, PointSet};
use crate::graph::{Graph, NodeId};
use crate::nn::{dense_block, linear, Activation, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{matmul_nt, Tensor};

/// Which correlation branches feed the fused output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchMode {
    /// Point and voxel branches fused (the full model).
    Both,
    /// Point branch only; the voxel slot is zero-filled before fusion.
    PointOnly,
    /// Voxel branch only; the point slot is zero-filled before fusion.
    VoxelOnly,
}

/// Correlation hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Top-M similarity candidates kept per (frame, query).
    pub m_trunc: usize,
    /// Spatially nearest candidates pooled by the point branch.
    pub m_k: usize,
    /// Voxel cube half-extents in meters, one pyramid level per entry.
    pub radii: Vec<f64>,
    /// Per-axis sub-cube count a (each level bins into a³ cells).
    pub resolution: usize,
    /// Feature width of each branch and of the fused output.
    pub width: usize,
    /// Active branches.
    pub mode: BranchMode,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            m_trunc: 64,
            m_k: 16,
            radii: vec![0.25, 0.5, 1.0],
            resolution: 3,
            width: 64,
            mode: BranchMode::Both,
        }
    }
}

impl CorrelationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_trunc == 0 {
            return Err(Error::config("truncation count must be positive"));
        }
        if self.m_k == 0 || self.m_k > self.m_trunc {
            return Err(Error::config(alloc::format!(
                "point-branch neighbor count {} not in 1..={}",
                self.m_k,
                self.m_trunc
            )));
        }
        if self.radii.is_empty() || self.radii.iter().any(|&r| r <= 0.0) {
            return Err(Error::config("voxel radii must be non-empty and positive"));
        }
        if self.resolution == 0 {
            return Err(Error::config("voxel resolution must be at least 1"));
        }
        if self.width == 0 {
            return Err(Error::config("correlation width must be positive"));
        }
        Ok(())
    }
}

/// Top-M similarity candidates for every query against one frame.
#[derive(Debug, Clone)]
pub struct TruncatedCorrelation<S> {
    /// Per query: candidate indices into the frame's downsampled points,
    /// ordered by descending similarity (ties: lowest index).
    pub indices: Vec<Vec<usize>>,
    /// Per query: similarity values aligned with `indices` (forward copies;
    /// the differentiable values live in `values_node`).
    pub values: Vec<Vec<S>>,
    /// `[N·M, 1]` similarity node (query-major) in the graph.
    pub values_node: NodeId,
    /// Candidates kept per query.
    pub m: usize,
}

/// Compute and truncate similarities for all queries against one frame.
///
/// `q_feats` is `[N, C]`, the frame supplies `[n_f, C]` features; keeps the
/// `m_trunc` highest `⟨q, f⟩/√C` per query.
pub fn similarity_truncate_frame<S: Scalar>(
    g: &mut Graph<S>,
    q_feats: NodeId,
    frame: &FrameFeatures<S>,
    m_trunc: usize,
) -> Result<TruncatedCorrelation<S>> {
    let qs = g.value(q_feats).shape().to_vec();
    let fs = g.value(frame.feats).shape().to_vec();
    if qs.len() != 2 || fs.len() != 2 || qs[1] != fs[1] {
        return Err(Error::arg(alloc::format!(
            "query features {qs:?} vs frame features {fs:?}"
        )));
    }
    let (n, c) = (qs[0], qs[1]);
    let nf = fs[0];
    if m_trunc == 0 || m_trunc > nf {
        return Err(Error::arg(alloc::format!(
            "truncation count {m_trunc} not in 1..={nf}"
        )));
    }

    // Untaped full similarity matrix drives the selection.
    let scale = S::from_f64(1.0 / (c as f64).sqrt());
    let sims = matmul_nt(g.value(q_feats).data(), g.value(frame.feats).data(), n, c, nf);

    let mut indices = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for qi in 0..n {
        let row = &sims[qi * nf..(qi + 1) * nf];
        let mut order: Vec<usize> = (0..nf).collect();
        // Descending by value, ascending by index on ties.
        order.sort_by(|&a, &b| match row[b].partial_cmp(&row[a]) {
            Some(core::cmp::Ordering::Equal) | None => a.cmp(&b),
            Some(ord) => ord,
        });
        order.truncate(m_trunc);
        values.push(order.iter().map(|&j| row[j] * scale).collect());
        indices.push(order);
    }

    // Differentiable recomputation of exactly the selected entries.
    let mut q_rep = Vec::with_capacity(n * m_trunc);
    let mut f_sel = Vec::with_capacity(n * m_trunc);
    for (qi, idx) in indices.iter().enumerate() {
        for &j in idx {
            q_rep.push(qi);
            f_sel.push(j);
        }
    }
    let qg = g.gather_rows(q_feats, &q_rep)?;
    let fg = g.gather_rows(frame.feats, &f_sel)?;
    let dots = g.row_dot(qg, fg)?;
    let values_node = g.scale(dots, 1.0 / (c as f64).sqrt());

    Ok(TruncatedCorrelation { indices, values, values_node, m: m_trunc })
}

/// Single-query convenience wrapper around [`similarity_truncate_frame`].
pub fn similarity_truncate<S: Scalar>(
    g: &mut Graph<S>,
    q_feat: NodeId,
    frame: &FrameFeatures<S>,
    m_trunc: usize,
) -> Result<TruncatedCorrelation<S>> {
    let shape = g.value(q_feat).shape();
    if shape.len() != 2 || shape[0] != 1 {
        return Err(Error::arg(alloc::format!("expected a single [1, C] query row, got {shape:?}")));
    }
    similarity_truncate_frame(g, q_feat, frame, m_trunc)
}

/// Point branch (all queries of one frame): pool an MLP over the `m_k`
/// spatially nearest truncated candidates.
///
/// Per candidate the MLP sees `[similarity, candidate − trajectory]`; the
/// offset is differentiable w.r.t. the trajectory position node.
pub fn point_branch_frame<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    cfg: &CorrelationConfig,
    traj_pos: NodeId,
    trunc: &TruncatedCorrelation<S>,
    frame: &FrameFeatures<S>,
) -> Result<NodeId> {
    let n = trunc.indices.len();
    if n == 0 || trunc.m == 0 {
        return Err(Error::arg("point branch over an empty candidate set"));
    }
    if cfg.m_k > trunc.m {
        return Err(Error::arg(alloc::format!(
            "point branch wants {} neighbors from {} candidates",
            cfg.m_k,
            trunc.m
        )));
    }
    let ts = g.value(traj_pos).shape();
    if ts != [n, 3] {
        return Err(Error::arg(alloc::format!("trajectory positions {ts:?}, want [{n}, 3]")));
    }
    let mk = cfg.m_k;

    let traj_vals: Vec<[S; 3]> = g
        .value(traj_pos)
        .data()
        .chunks_exact(3)
        .map(|p| [p[0], p[1], p[2]])
        .collect();

    // Select the m_k nearest candidates per query (by forward positions).
    let mut sim_rows = Vec::with_capacity(n * mk);
    let mut traj_rep = Vec::with_capacity(n * mk);
    let mut cand_xyz = Vec::with_capacity(n * mk * 3);
    for qi in 0..n {
        let cands = &trunc.indices[qi];
        let mut order: Vec<usize> = (0..cands.len()).collect();
        let d2 = |slot: usize| dist2(frame.points.get(cands[slot]), traj_vals[qi]);
        order.sort_by(|&a, &b| match d2(a).partial_cmp(&d2(b)) {
            Some(core::cmp::Ordering::Equal) | None => a.cmp(&b),
            Some(ord) => ord,
        });
        for &slot in order.iter().take(mk) {
            sim_rows.push(qi * trunc.m + slot);
            traj_rep.push(qi);
            let p = frame.points.get(cands[slot]);
            cand_xyz.extend_from_slice(&p);
        }
    }

    let sims = g.gather_rows(trunc.values_node, &sim_rows)?;
    let cand_node = g.input(Tensor::new(&[n * mk, 3], cand_xyz)?);
    let traj_gather = g.gather_rows(traj_pos, &traj_rep)?;
    let offsets = g.sub(cand_node, traj_gather)?;
    let rows = g.concat(&[sims, offsets], 1)?;

    let mlp = dense_block(
        g,
        store,
        "corr.point.mlp",
        &[4, cfg.width, cfg.width],
        Activation::Relu,
        rows,
    )?;
    g.max_pool_rows(mlp, mk)
}

/// Per-cell mean similarities for one radius: `[N, a³]`.
///
/// Bins each query's truncated candidates into the `a³` sub-cubes of the
/// cube of half-extent `radius` centered on the query's trajectory position;
/// empty cells read 0.
pub fn voxel_averages<S: Scalar>(
    g: &mut Graph<S>,
    centers: &[[S; 3]],
    trunc: &TruncatedCorrelation<S>,
    frame: &FrameFeatures<S>,
    radius: f64,
    resolution: usize,
) -> Result<NodeId> {
    let n = trunc.indices.len();
    if centers.len() != n {
        return Err(Error::arg(alloc::format!("{} centers for {n} queries", centers.len())));
    }
    let a3 = resolution * resolution * resolution;
    let mut segments: Vec<Vec<usize>> = Vec::with_capacity(n * a3);
    for qi in 0..n {
        let cands = &trunc.indices[qi];
        let pos = PointSet::new(cands.iter().map(|&j| frame.points.get(j)).collect())?;
        let cells = pos.voxel_bin(centers[qi], S::from_f64(radius), resolution)?;
        for cell in cells {
            segments.push(cell.into_iter().map(|slot| qi * trunc.m + slot).collect());
        }
    }
    let means = g.segment_mean(trunc.values_node, &segments)?;
    g.reshape(means, &[n, a3])
}

/// Voxel branch (all queries of one frame): per radius, average similarities
/// into sub-cubes, run a per-radius MLP, and concatenate across radii.
pub fn voxel_branch_frame<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    cfg: &CorrelationConfig,
    centers: &[[S; 3]],
    trunc: &TruncatedCorrelation<S>,
    frame: &FrameFeatures<S>,
) -> Result<NodeId> {
    if cfg.radii.is_empty() || cfg.radii.iter().any(|&r| r <= 0.0) {
        return Err(Error::arg("voxel radii must be non-empty and positive"));
    }
    let a3 = cfg.resolution.pow(3);
    let mut per_radius = Vec::with_capacity(cfg.radii.len());
    for (ri, &r) in cfg.radii.iter().enumerate() {
        let avgs = voxel_averages(g, centers, trunc, frame, r, cfg.resolution)?;
        let feat = dense_block(
            g,
            store,
            &alloc::format!("corr.voxel.r{ri}.mlp"),
            &[a3, cfg.width, cfg.width],
            Activation::Relu,
            avgs,
        )?;
        per_radius.push(feat);
    }
    g.concat(&per_radius, 1)
}

/// Fuse branch outputs: concatenate (zero-filling the slot of a disabled
/// branch) and apply a linear projection to the fusion width.
pub fn fuse_frame<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    cfg: &CorrelationConfig,
    point: Option<NodeId>,
    voxel: Option<NodeId>,
    n_queries: usize,
) -> Result<NodeId> {
    let w = cfg.width;
    let vw = cfg.width * cfg.radii.len();
    let (point_slot, voxel_slot) = match cfg.mode {
        BranchMode::Both => (point, voxel),
        BranchMode::PointOnly => (point, None),
        BranchMode::VoxelOnly => (None, voxel),
    };
    if point_slot.is_none() && voxel_slot.is_none() {
        return Err(Error::config("fusion needs at least one active correlation branch"));
    }
    let p = match point_slot {
        Some(id) => id,
        None => g.input(Tensor::zeros(&[n_queries, w])),
    };
    let v = match voxel_slot {
        Some(id) => id,
        None => g.input(Tensor::zeros(&[n_queries, vw])),
    };
    let cat = g.concat(&[p, v], 1)?;
    linear(g, store, "corr.fuse", w + vw, w, cat)
}

/// Full correlation pipeline for one frame: truncate, run the active
/// branches, fuse. Returns the truncation (for inspection) and the fused
/// `[N, width]` feature node.
pub fn correlate_frame<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    cfg: &CorrelationConfig,
    q_feats: NodeId,
    traj_pos: NodeId,
    frame: &FrameFeatures<S>,
) -> Result<(TruncatedCorrelation<S>, NodeId)> {
    cfg.validate()?;
    let trunc = similarity_truncate_frame(g, q_feats, frame, cfg.m_trunc.min(frame.points.len()))?;
    let n = trunc.indices.len();
    let centers: Vec<[S; 3]> = g
        .value(traj_pos)
        .data()
        .chunks_exact(3)
        .map(|p| [p[0], p[1], p[2]])
        .collect();
    let point = if cfg.mode != BranchMode::VoxelOnly {
        let mut local = cfg.clone();
        local.m_k = cfg.m_k.min(trunc.m);
        Some(point_branch_frame(g, store, &local, traj_pos, &trunc, frame)?)
    } else {
        None
    };
    let voxel = if cfg.mode != BranchMode::PointOnly {
        Some(voxel_branch_frame(g, store, cfg, &centers, &trunc, frame)?)
    } else {
        None
    };
    let fused = fuse_frame(g, store, cfg, point, voxel, n)?;
    Ok((trunc, fused))
}
