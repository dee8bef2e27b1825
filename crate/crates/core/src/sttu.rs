//! Trajectory update transformer: motion-token construction, alternating
//! inter-frame/intra-frame attention blocks, and the residual predictor head.
//!
//! Tokens live in a flat `[T·N, D]` layout, frame-major: row `t·N + i` holds
//! query `i` at frame `t`. Temporal blocks attend over each query's `T`
//! tokens, spatial blocks over each frame's `N` tokens; both keep every other
//! axis separate.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::{
    dense_block, layer_norm, linear, linear_with, multi_head_attention_grouped, Activation,
    InitScheme, ParamStore,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Transformer-update hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SttuConfig {
    /// Temporal/spatial block pairs; the stack applies `2·depth_m` blocks.
    pub depth_m: usize,
    /// Attention heads per block.
    pub heads: usize,
    /// Width of the sinusoidal flow embedding inside each token
    /// (3 coordinates × sin/cos pairs ⇒ must be a positive multiple of 6).
    pub flow_embed_width: usize,
    /// Pre-projection width of the sinusoidal position embedding
    /// (multiple of 6, same layout as the flow embedding).
    pub pos_embed_width: usize,
    /// Pre-projection width of the sinusoidal timestep embedding (even).
    pub time_embed_width: usize,
    /// Hidden width of each block's MLP as a multiple of the token width.
    pub mlp_ratio: usize,
    /// Hidden width of the two-layer predictor head.
    pub predictor_hidden: usize,
}

impl Default for SttuConfig {
    fn default() -> Self {
        SttuConfig {
            depth_m: 3,
            heads: 4,
            flow_embed_width: 36,
            pos_embed_width: 36,
            time_embed_width: 32,
            mlp_ratio: 4,
            predictor_hidden: 128,
        }
    }
}

impl SttuConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth_m == 0 {
            return Err(Error::config("transformer depth must be at least 1"));
        }
        if self.heads == 0 {
            return Err(Error::config("attention needs at least one head"));
        }
        if self.flow_embed_width == 0 || self.flow_embed_width % 6 != 0 {
            return Err(Error::config(format!(
                "flow embedding width {} must be a positive multiple of 6",
                self.flow_embed_width
            )));
        }
        if self.pos_embed_width == 0 || self.pos_embed_width % 6 != 0 {
            return Err(Error::config(format!(
                "position embedding width {} must be a positive multiple of 6",
                self.pos_embed_width
            )));
        }
        if self.time_embed_width == 0 || self.time_embed_width % 2 != 0 {
            return Err(Error::config(format!(
                "timestep embedding width {} must be even and positive",
                self.time_embed_width
            )));
        }
        if self.mlp_ratio == 0 {
            return Err(Error::config("block MLP ratio must be positive"));
        }
        if self.predictor_hidden == 0 {
            return Err(Error::config("predictor hidden width must be positive"));
        }
        Ok(())
    }
}

/// One motion token per (frame, query): `[T·N, D]`, frame-major.
#[derive(Debug, Clone, Copy)]
pub struct MotionTokens {
    /// `[T·N, D]` token node.
    pub tokens: NodeId,
    /// Frames in the window.
    pub t: usize,
    /// Queries per frame.
    pub n: usize,
    /// Token width: fusion width + feature channels + flow embedding width.
    pub d: usize,
}

/// Which axis a transformer block attends over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionAxis {
    /// Each query attends over its own T frames.
    Temporal,
    /// Each frame attends over its own N queries.
    Spatial,
}

/// Assemble motion tokens from fused correlation features, trajectory
/// features, and the flow since initialization, then add projected position
/// and timestep encodings.
///
/// All grids are `[T·N, …]`, frame-major; `timestamps` supplies one integer
/// per frame.
pub fn build_tokens<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    cfg: &SttuConfig,
    c_fuse: NodeId,
    q_feat: NodeId,
    q_xyz: NodeId,
    q_xyz0: NodeId,
    timestamps: &[usize],
    n: usize,
) -> Result<MotionTokens> {
    cfg.validate()?;
    let t = timestamps.len();
    if t == 0 || n == 0 {
        return Err(Error::arg("token grid needs at least one frame and one query"));
    }
    let rows = t * n;
    let sf = g.value(c_fuse).shape().to_vec();
    let sq = g.value(q_feat).shape().to_vec();
    let sx = g.value(q_xyz).shape().to_vec();
    let s0 = g.value(q_xyz0).shape().to_vec();
    if sf.len() != 2 || sf[0] != rows {
        return Err(Error::arg(format!("fused features {sf:?}, want [{rows}, W]")));
    }
    if sq.len() != 2 || sq[0] != rows {
        return Err(Error::arg(format!("trajectory features {sq:?}, want [{rows}, C]")));
    }
    if sx != [rows, 3] || s0 != [rows, 3] {
        return Err(Error::arg(format!(
            "positions {sx:?} / anchors {s0:?}, want [{rows}, 3]"
        )));
    }

    // Token body: fused correlation, current features, embedded flow.
    let flow = g.sub(q_xyz, q_xyz0)?;
    let flow_e = g.sinusoidal_encode(flow, cfg.flow_embed_width / 3)?;
    let motion = g.concat(&[c_fuse, q_feat, flow_e], 1)?;
    let d = sf[1] + sq[1] + cfg.flow_embed_width;

    // Added context: projected position and timestep encodings.
    let pos_e = g.sinusoidal_encode(q_xyz, cfg.pos_embed_width / 3)?;
    let pos_p = linear(g, store, "sttu.pos_proj", cfg.pos_embed_width, d, pos_e)?;
    let mut tcol = Vec::with_capacity(rows);
    for &ts in timestamps {
        let v = S::from_usize(ts);
        tcol.extend(core::iter::repeat(v).take(n));
    }
    let t_node = g.input(Tensor::new(&[rows, 1], tcol)?);
    let time_e = g.sinusoidal_encode(t_node, cfg.time_embed_width)?;
    let time_p = linear(g, store, "sttu.time_proj", cfg.time_embed_width, d, time_e)?;

    let with_pos = g.add(motion, pos_p)?;
    let tokens = g.add(with_pos, time_p)?;
    Ok(MotionTokens { tokens, t, n, d })
}

/// One pre-norm transformer block attending along the requested axis:
/// `x + Attn(LN(x))`, then `y + MLP(LN(y))`.
pub fn transformer_block<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    cfg: &SttuConfig,
    prefix: &str,
    tokens: &MotionTokens,
    axis: AttentionAxis,
) -> Result<MotionTokens> {
    let MotionTokens { tokens: x, t, n, d } = *tokens;
    if d % cfg.heads != 0 {
        return Err(Error::arg(format!("token width {d} not divisible into {} heads", cfg.heads)));
    }

    // Reorder so each attention group is a contiguous row block: the frame
    // axis already is; the query axis needs a transpose.
    let (grouped, groups) = match axis {
        AttentionAxis::Spatial => (x, t),
        AttentionAxis::Temporal => {
            let r = g.reshape(x, &[t, n, d])?;
            let p = g.permute(r, &[1, 0, 2])?;
            (g.reshape(p, &[n * t, d])?, n)
        }
    };

    let ln1 = layer_norm(g, store, &format!("{prefix}.ln1"), d, grouped)?;
    let att = multi_head_attention_grouped(g, store, &format!("{prefix}.attn"), cfg.heads, groups, ln1)?;
    let x1 = g.add(grouped, att)?;
    let ln2 = layer_norm(g, store, &format!("{prefix}.ln2"), d, x1)?;
    let mlp = dense_block(
        g,
        store,
        &format!("{prefix}.mlp"),
        &[d, cfg.mlp_ratio * d, d],
        Activation::Gelu,
        ln2,
    )?;
    let x2 = g.add(x1, mlp)?;

    let out = match axis {
        AttentionAxis::Spatial => x2,
        AttentionAxis::Temporal => {
            let r = g.reshape(x2, &[n, t, d])?;
            let p = g.permute(r, &[1, 0, 2])?;
            g.reshape(p, &[t * n, d])?
        }
    };
    Ok(MotionTokens { tokens: out, t, n, d })
}

/// Apply the alternating stack: `2·depth_m` pre-norm blocks, starting along
/// the temporal axis, alternating with spatial blocks.
pub fn spatio_temporal_transform<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    cfg: &SttuConfig,
    tokens: &MotionTokens,
) -> Result<MotionTokens> {
    cfg.validate()?;
    let mut cur = *tokens;
    for b in 0..2 * cfg.depth_m {
        let axis = if b % 2 == 0 { AttentionAxis::Temporal } else { AttentionAxis::Spatial };
        cur = transformer_block(g, store, cfg, &format!("sttu.blk{b}"), &cur, axis)?;
    }
    Ok(cur)
}

/// Shared two-layer head mapping each token to residual updates:
/// `[T·N, 3]` position deltas and `[T·N, C]` feature deltas.
///
/// The final layer starts at zero, so an untrained stack predicts the
/// identity refinement.
pub fn predict_updates<S: Scalar>(
    g: &mut Graph<S>,
    store: &mut ParamStore<S>,
    cfg: &SttuConfig,
    tokens: &MotionTokens,
    channels: usize,
) -> Result<(NodeId, NodeId)> {
    cfg.validate()?;
    if channels == 0 {
        return Err(Error::arg("feature channel count must be positive"));
    }
    let d = tokens.d;
    let h = linear(g, store, "sttu.pred.0", d, cfg.predictor_hidden, tokens.tokens)?;
    let h = g.gelu(h);
    let out = linear_with(
        g,
        store,
        "sttu.pred.1",
        cfg.predictor_hidden,
        3 + channels,
        h,
        InitScheme::Zeros,
    )?;
    let delta_xyz = g.slice(out, 1, 0, 3)?;
    let delta_feat = g.slice(out, 1, 3, channels)?;
    Ok((delta_xyz, delta_feat))
}
