//! Per-frame point feature encoder at 4× spatial reduction.
//!
//! Two identical stages, each halving the point count: farthest point
//! sampling keeps half the points, then every kept point aggregates its
//! `k_enc` nearest neighbors from the stage input by running a shared MLP
//! over `concat(neighbor feature, neighbor − center)` rows and max-pooling
//! over the neighborhood. Only relative offsets enter the math, so features
//! are invariant under rigid translation of the frame while coordinates
//! translate along with it.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PointSet;
use crate::graph::{Graph, NodeId};
use crate::nn::{dense_block, Activation, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Encoder hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Output feature channels C.
    pub channels: usize,
    /// Neighborhood size for per-point aggregation.
    pub k_enc: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig { channels: 64, k_enc: 8 }
    }
}

/// One frame's encoded output: a 4×-downsampled subset of the input points
/// with a C-dimensional feature row per kept point (a live graph node, so
/// gradients can flow back into the encoder).
#[derive(Debug, Clone)]
pub struct FrameFeatures<S> {
    /// Indices of the kept points into the original frame.
    pub indices: Vec<usize>,
    /// Coordinates of the kept points (same order as `indices`).
    pub points: PointSet<S>,
    /// `[kept, C]` feature node in the graph the frame was encoded into.
    pub feats: NodeId,
}

/// Minimum frame size: two non-degenerate 2× downsampling stages.
pub const MIN_FRAME_POINTS: usize = 16;

/// One FPS + neighborhood-MLP + max-pool stage.
///
/// `feats` is `None` for the raw input stage (aggregation then sees only
/// relative offsets). Returns the kept indices (into the stage input) and
/// the pooled feature node.
fn encode_stage<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    prefix: &str,
    pts: &PointSet<S>,
    feats: Option<(NodeId, usize)>,
    out_dim: usize,
    k_enc: usize,
) -> Result<(Vec<usize>, NodeId)> {
    let n = pts.len();
    let m = n / 2;
    let k = k_enc.min(n);
    let sel = pts.farthest_point_sample(m, 0)?;
    let centers: Vec<[S; 3]> = sel.iter().map(|&i| pts.get(i)).collect();
    let center_set = PointSet::new(centers)?;
    let neighborhoods = pts.knn_query(&center_set, k)?;

    // Flat neighbor index list and per-row offsets, row-major [m·k, 3].
    let mut flat_idx = Vec::with_capacity(m * k);
    let mut offsets = Vec::with_capacity(m * k * 3);
    for (ci, nbrs) in neighborhoods.iter().enumerate() {
        let c = center_set.get(ci);
        for &j in &nbrs.indices {
            flat_idx.push(j);
            let p = pts.get(j);
            offsets.push(p[0] - c[0]);
            offsets.push(p[1] - c[1]);
            offsets.push(p[2] - c[2]);
        }
    }
    let off_node = g.input(Tensor::new(&[m * k, 3], offsets)?);

    let (rows, in_dim) = match feats {
        Some((f, fdim)) => {
            let gathered = g.gather_rows(f, &flat_idx)?;
            (g.concat(&[gathered, off_node], 1)?, fdim + 3)
        }
        None => (off_node, 3),
    };
    let mlp = dense_block(
        g,
        store,
        &alloc::format!("{prefix}.mlp"),
        &[in_dim, out_dim, out_dim],
        Activation::Relu,
        rows,
    )?;
    let pooled = g.max_pool_rows(mlp, k)?;
    Ok((sel, pooled))
}

/// Encode one frame into 4×-downsampled per-point features.
pub fn encode_frame<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    frame: &PointSet<S>,
    config: &BackboneConfig,
) -> Result<FrameFeatures<S>> {
    if frame.len() < MIN_FRAME_POINTS {
        return Err(Error::arg(alloc::format!(
            "frame has {} points, encoder needs at least {MIN_FRAME_POINTS}",
            frame.len()
        )));
    }
    let c = config.channels;
    let c1 = (c / 2).max(4);

    let (sel1, f1) = encode_stage(g, store, "backbone.stage0", frame, None, c1, config.k_enc)?;
    let pts1 = PointSet::new(sel1.iter().map(|&i| frame.get(i)).collect())?;
    let (sel2, f2) =
        encode_stage(g, store, "backbone.stage1", &pts1, Some((f1, c1)), c, config.k_enc)?;

    let indices: Vec<usize> = sel2.iter().map(|&i| sel1[i]).collect();
    let points = PointSet::new(indices.iter().map(|&i| frame.get(i)).collect())?;
    Ok(FrameFeatures { indices, points, feats: f2 })
}

/// Encode every frame independently, preserving order.
pub fn encode_sequence<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    frames: &[PointSet<S>],
    config: &BackboneConfig,
) -> Result<Vec<FrameFeatures<S>>> {
    frames.iter().map(|f| encode_frame(g, store, f, config)).collect()
}
