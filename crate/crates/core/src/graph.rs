//! Eager reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records every operation as it is evaluated; [`Graph::backward`]
//! then walks the tape in reverse insertion order and accumulates exact
//! gradients for every bound parameter. The op set is exactly what the
//! tracking model needs — dense linear algebra, a few fused nonlinearities,
//! and index-based selection ops whose backward passes scatter-add in a fixed
//! order, keeping gradients bit-reproducible.
//!
//! Selection decisions themselves (which rows to gather, pooling argmaxes,
//! segment memberships) are treated as constants of the forward pass:
//! gradients flow through the selected values, not through the act of
//! selecting, matching straight-through semantics.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{matmul, matmul_nt, matmul_tn, strides, Tensor};

/// Epsilon inside layer-norm's variance square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param { name: String },
    Matmul { a: NodeId, b: NodeId },
    Bmm { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: f64 },
    AddBias { a: NodeId, bias: NodeId },
    Reshape { a: NodeId },
    Permute { a: NodeId, perm: Vec<usize> },
    Concat { parts: Vec<NodeId>, axis: usize },
    Slice { a: NodeId, axis: usize, start: usize, len: usize },
    GatherRows { a: NodeId, idx: Vec<usize> },
    RowDot { a: NodeId, b: NodeId },
    RowNorm { a: NodeId },
    MaxPoolRows { a: NodeId },
    SoftmaxRows { a: NodeId },
    LayerNorm { a: NodeId, gamma: NodeId, beta: NodeId },
    Relu { a: NodeId },
    Gelu { a: NodeId },
    SinusoidalEncode { a: NodeId, out_dim: usize },
    SegmentMean { a: NodeId, segments: Vec<Vec<usize>> },
    SumAll { a: NodeId },
    MeanAll { a: NodeId },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param { .. } => "param",
            Op::Matmul { .. } => "matmul",
            Op::Bmm { .. } => "bmm",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::AddBias { .. } => "add_bias",
            Op::Reshape { .. } => "reshape",
            Op::Permute { .. } => "permute",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::GatherRows { .. } => "gather_rows",
            Op::RowDot { .. } => "row_dot",
            Op::RowNorm { .. } => "row_norm",
            Op::MaxPoolRows { .. } => "max_pool_rows",
            Op::SoftmaxRows { .. } => "softmax_rows",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Relu { .. } => "relu",
            Op::Gelu { .. } => "gelu",
            Op::SinusoidalEncode { .. } => "sinusoidal_encode",
            Op::SegmentMean { .. } => "segment_mean",
            Op::SumAll { .. } => "sum_all",
            Op::MeanAll { .. } => "mean_all",
        }
    }
}

#[derive(Debug)]
struct Node<S> {
    op: Op,
    value: Tensor<S>,
    needs_grad: bool,
    /// Forward-pass selection record (argmax rows for max-pooling).
    aux: Vec<usize>,
}

/// Tape of eagerly evaluated tensor operations.
#[derive(Debug, Default)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    params: BTreeMap<String, NodeId>,
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), params: BTreeMap::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor<S>, needs_grad: bool, aux: Vec<usize>) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad, aux });
        NodeId(self.nodes.len() - 1)
    }

    fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// Record a constant tensor (no gradient).
    pub fn input(&mut self, value: Tensor<S>) -> NodeId {
        self.push(Op::Input, value, false, Vec::new())
    }

    /// Bind a named parameter tensor.
    ///
    /// The first bind under a name records `value`; later binds return the
    /// existing node (so reuse accumulates gradients) and ignore `value` —
    /// callers always bind from the same store, so the values agree.
    pub fn param(&mut self, name: &str, value: &Tensor<S>) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(
            Op::Param { name: name.to_string() },
            value.clone(),
            true,
            Vec::new(),
        );
        self.params.insert(name.to_string(), id);
        id
    }

    /// `A · B` for `A: [m, k]`, `B: [k, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::arg(alloc::format!("matmul shapes {sa:?} × {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(&[m, n], data)?;
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(Op::Matmul { a, b }, value, ng, Vec::new()))
    }

    /// Batched matmul: `[B, m, k] · [B, k, n]`.
    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::arg(alloc::format!("bmm shapes {sa:?} × {sb:?}")));
        }
        let (bn, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut data = Vec::with_capacity(bn * m * n);
        for bi in 0..bn {
            let av = &self.value(a).data()[bi * m * k..(bi + 1) * m * k];
            let bv = &self.value(b).data()[bi * k * n..(bi + 1) * k * n];
            data.extend_from_slice(&matmul(av, bv, m, k, n));
        }
        let value = Tensor::new(&[bn, m, n], data)?;
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(Op::Bmm { a, b }, value, ng, Vec::new()))
    }

    fn elementwise(&mut self, a: NodeId, b: NodeId, f: impl Fn(S, S) -> S, op: Op) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::arg(alloc::format!(
                "{} shapes {:?} vs {:?}",
                op.name(),
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.value(a).shape(), data)?;
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(op, value, ng, Vec::new()))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, |x, y| x + y, Op::Add { a, b })
    }

    /// Elementwise difference `a − b`.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, |x, y| x - y, Op::Sub { a, b })
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// Multiply by a compile-time-known constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let cs = S::from_f64(c);
        let data = self.value(a).data().iter().map(|&x| x * cs).collect();
        let value = Tensor::new(self.value(a).shape(), data).expect("same shape");
        let ng = self.nodes[a.0].needs_grad;
        self.push(Op::Scale { a, c }, value, ng, Vec::new())
    }

    /// Broadcast-add a `[C]` bias over the last dimension of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(bias).shape());
        let c = *sa.last().unwrap_or(&0);
        if sb.len() != 1 || sb[0] != c || c == 0 {
            return Err(Error::arg(alloc::format!("bias {sb:?} against {sa:?}")));
        }
        let bdata = self.value(bias).data();
        let data: Vec<S> = self
            .value(a)
            .data()
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(bdata).map(|(&x, &b)| x + b).collect::<Vec<_>>())
            .collect();
        let value = Tensor::new(sa, data)?;
        let ng = self.any_grad(&[a, bias]);
        Ok(self.push(Op::AddBias { a, bias }, value, ng, Vec::new()))
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(a).clone().reshape(shape)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Op::Reshape { a }, value, ng, Vec::new()))
    }

    /// Reorder dimensions: output dim `d` is input dim `perm[d]`.
    pub fn permute(&mut self, a: NodeId, perm: &[usize]) -> Result<NodeId> {
        let value = permute_tensor(self.value(a), perm)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Op::Permute { a, perm: perm.to_vec() }, value, ng, Vec::new()))
    }

    /// Concatenate same-rank tensors along `axis`.
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::arg("concat of zero tensors"));
        }
        let rank = self.value(parts[0]).shape().len();
        if axis >= rank {
            return Err(Error::arg(alloc::format!("concat axis {axis} for rank {rank}")));
        }
        let mut out_shape = self.value(parts[0]).shape().to_vec();
        out_shape[axis] = 0;
        for &p in parts {
            let sp = self.value(p).shape();
            if sp.len() != rank
                || sp.iter().zip(&out_shape).enumerate().any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(Error::arg(alloc::format!("concat shape {sp:?} vs {out_shape:?}")));
            }
            out_shape[axis] += sp[axis];
        }
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mid_out = out_shape[axis];
        let mut data = vec![S::zero(); outer * mid_out * inner];
        let mut off = 0usize;
        for &p in parts {
            let mid_p = self.value(p).shape()[axis];
            let pdata = self.value(p).data();
            for o in 0..outer {
                let src = &pdata[o * mid_p * inner..(o + 1) * mid_p * inner];
                let dst_at = (o * mid_out + off) * inner;
                data[dst_at..dst_at + mid_p * inner].copy_from_slice(src);
            }
            off += mid_p;
        }
        let value = Tensor::new(&out_shape, data)?;
        let ng = self.any_grad(parts);
        Ok(self.push(Op::Concat { parts: parts.to_vec(), axis }, value, ng, Vec::new()))
    }

    /// Contiguous slab `[start, start+len)` along `axis`.
    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let sa = self.value(a).shape();
        if axis >= sa.len() || len == 0 || start + len > sa[axis] {
            return Err(Error::arg(alloc::format!(
                "slice [{start}, {start}+{len}) along axis {axis} of {sa:?}"
            )));
        }
        let outer: usize = sa[..axis].iter().product();
        let inner: usize = sa[axis + 1..].iter().product();
        let mid_in = sa[axis];
        let mut out_shape = sa.to_vec();
        out_shape[axis] = len;
        let adata = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let at = (o * mid_in + start) * inner;
            data.extend_from_slice(&adata[at..at + len * inner]);
        }
        let value = Tensor::new(&out_shape, data)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Op::Slice { a, axis, start, len }, value, ng, Vec::new()))
    }

    /// Select rows of a `[n, C]` tensor by index; repeats allowed.
    ///
    /// The index list is data, not a differentiable input; the backward pass
    /// scatter-adds into the source rows in index order.
    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let sa = self.value(a).shape();
        if sa.len() != 2 {
            return Err(Error::arg(alloc::format!("gather_rows on rank {}", sa.len())));
        }
        let (n, c) = (sa[0], sa[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::arg(alloc::format!("gather_rows index {bad} out of {n}")));
        }
        let adata = self.value(a).data();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(&adata[i * c..(i + 1) * c]);
        }
        let value = Tensor::new(&[idx.len(), c], data)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Op::GatherRows { a, idx: idx.to_vec() }, value, ng, Vec::new()))
    }

    /// Per-row dot product of two `[R, C]` tensors → `[R, 1]`.
    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sa != sb {
            return Err(Error::arg(alloc::format!("row_dot shapes {sa:?} vs {sb:?}")));
        }
        let (r, c) = (sa[0], sa[1]);
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(r);
        for i in 0..r {
            data.push(crate::tensor::dot(&ad[i * c..(i + 1) * c], &bd[i * c..(i + 1) * c]));
        }
        let value = Tensor::new(&[r, 1], data)?;
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(Op::RowDot { a, b }, value, ng, Vec::new()))
    }

    /// Per-row Euclidean norm of a `[R, C]` tensor → `[R, 1]`.
    pub fn row_norm(&mut self, a: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape();
        if sa.len() != 2 {
            return Err(Error::arg(alloc::format!("row_norm on rank {}", sa.len())));
        }
        let (r, c) = (sa[0], sa[1]);
        let ad = self.value(a).data();
        let mut data = Vec::with_capacity(r);
        for i in 0..r {
            let row = &ad[i * c..(i + 1) * c];
            let mut acc = S::zero();
            for &x in row {
                acc = acc + x * x;
            }
            data.push(acc.sqrt());
        }
        let value = Tensor::new(&[r, 1], data)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Op::RowNorm { a }, value, ng, Vec::new()))
    }

    /// Max over consecutive groups of `group` rows: `[G·group, C] → [G, C]`.
    ///
    /// Ties take the lowest row; gradients flow only to the argmax element.
    pub fn max_pool_rows(&mut self, a: NodeId, group: usize) -> Result<NodeId> {
        let sa = self.value(a).shape();
        if sa.len() != 2 || group == 0 || sa[0] % group != 0 {
            return Err(Error::arg(alloc::format!("max_pool_rows group {group} over {sa:?}")));
        }
        let (r, c) = (sa[0], sa[1]);
        let groups = r / group;
        let ad = self.value(a).data();
        let mut data = Vec::with_capacity(groups * c);
        let mut aux = Vec::with_capacity(groups * c);
        for gi in 0..groups {
            for j in 0..c {
                let mut best = ad[gi * group * c + j];
                let mut best_row = gi * group;
                for rr in gi * group + 1..(gi + 1) * group {
                    let v = ad[rr * c + j];
                    if v > best {
                        best = v;
                        best_row = rr;
                    }
                }
                data.push(best);
                aux.push(best_row);
            }
        }
        let value = Tensor::new(&[groups, c], data)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Op::MaxPoolRows { a }, value, ng, aux))
    }

    /// Numerically stable softmax over the last dimension of `[R, C]`.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape();
        if sa.len() != 2 || sa[1] == 0 {
            return Err(Error::arg(alloc::format!("softmax_rows on {sa:?}")));
        }
        let (r, c) = (sa[0], sa[1]);
        let ad = self.value(a).data();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = &ad[i * c..(i + 1) * c];
            let mut mx = row[0];
            for &x in row {
                if x > mx {
                    mx = x;
                }
            }
            let mut sum = S::zero();
            let base = data.len();
            for &x in row {
                let e = (x - mx).exp();
                data.push(e);
                sum = sum + e;
            }
            for v in &mut data[base..] {
                *v = *v / sum;
            }
        }
        let value = Tensor::new(&[r, c], data)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Op::SoftmaxRows { a }, value, ng, Vec::new()))
    }

    /// Layer normalization over the last dimension of `[R, C]`, with
    /// learnable per-channel gain and shift.
    pub fn layer_norm(&mut self, a: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape();
        if sa.len() != 2 {
            return Err(Error::arg(alloc::format!("layer_norm on rank {}", sa.len())));
        }
        let (r, c) = (sa[0], sa[1]);
        let (sg, sb) = (self.value(gamma).shape(), self.value(beta).shape());
        if sg != [c] || sb != [c] {
            return Err(Error::arg(alloc::format!("layer_norm gain {sg:?}/shift {sb:?} for C={c}")));
        }
        let eps = S::from_f64(LAYER_NORM_EPS);
        let ad = self.value(a).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = &ad[i * c..(i + 1) * c];
            let (mu, sigma) = row_mean_sigma(row, eps);
            for (j, &x) in row.iter().enumerate() {
                data.push((x - mu) / sigma * gd[j] + bd[j]);
            }
        }
        let value = Tensor::new(&[r, c], data)?;
        let ng = self.any_grad(&[a, gamma, beta]);
        Ok(self.push(Op::LayerNorm { a, gamma, beta }, value, ng, Vec::new()))
    }

    /// Rectified linear unit.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|&x| if x > S::zero() { x } else { S::zero() })
            .collect();
        let value = Tensor::new(self.value(a).shape(), data).expect("same shape");
        let ng = self.nodes[a.0].needs_grad;
        self.push(Op::Relu { a }, value, ng, Vec::new())
    }

    /// GELU activation (tanh approximation).
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).data().iter().map(|&x| gelu_fwd(x)).collect();
        let value = Tensor::new(self.value(a).shape(), data).expect("same shape");
        let ng = self.nodes[a.0].needs_grad;
        self.push(Op::Gelu { a }, value, ng, Vec::new())
    }

    /// Sinusoidal encoding of each scalar: `[R, V] → [R, V·out_dim]`.
    ///
    /// Each value `v` becomes interleaved `[sin(v·ω_i), cos(v·ω_i)]` pairs
    /// over `out_dim/2` geometric frequencies spanning 1 down to 1/10000.
    pub fn sinusoidal_encode(&mut self, a: NodeId, out_dim: usize) -> Result<NodeId> {
        let sa = self.value(a).shape();
        if sa.len() != 2 {
            return Err(Error::arg(alloc::format!("sinusoidal_encode on rank {}", sa.len())));
        }
        if out_dim == 0 || out_dim % 2 != 0 {
            return Err(Error::arg(alloc::format!("encoding width {out_dim} must be even and positive")));
        }
        let (r, v) = (sa[0], sa[1]);
        let omegas = sinusoid_freqs::<S>(out_dim / 2);
        let ad = self.value(a).data();
        let mut data = Vec::with_capacity(r * v * out_dim);
        for &x in ad.iter().take(r * v) {
            for &w in &omegas {
                let vw = x * w;
                data.push(vw.sin());
                data.push(vw.cos());
            }
        }
        let value = Tensor::new(&[r, v * out_dim], data)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Op::SinusoidalEncode { a, out_dim }, value, ng, Vec::new()))
    }

    /// Mean of selected rows per segment: `[R, C] → [num_segments, C]`.
    ///
    /// Empty segments produce zero rows. Membership lists are data, not
    /// differentiable inputs.
    pub fn segment_mean(&mut self, a: NodeId, segments: &[Vec<usize>]) -> Result<NodeId> {
        let sa = self.value(a).shape();
        if sa.len() != 2 {
            return Err(Error::arg(alloc::format!("segment_mean on rank {}", sa.len())));
        }
        let (r, c) = (sa[0], sa[1]);
        for seg in segments {
            if let Some(&bad) = seg.iter().find(|&&i| i >= r) {
                return Err(Error::arg(alloc::format!("segment index {bad} out of {r}")));
            }
        }
        let ad = self.value(a).data();
        let mut data = vec![S::zero(); segments.len() * c];
        for (si, seg) in segments.iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            let inv = S::one() / S::from_usize(seg.len());
            let out_row = &mut data[si * c..(si + 1) * c];
            for &ri in seg {
                for (o, &x) in out_row.iter_mut().zip(&ad[ri * c..(ri + 1) * c]) {
                    *o = *o + x * inv;
                }
            }
        }
        let value = Tensor::new(&[segments.len(), c], data)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Op::SegmentMean { a, segments: segments.to_vec() }, value, ng, Vec::new()))
    }

    /// Sum of every element → `[1]`.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let mut acc = S::zero();
        for &x in self.value(a).data() {
            acc = acc + x;
        }
        let value = Tensor::new(&[1], vec![acc]).expect("scalar");
        let ng = self.nodes[a.0].needs_grad;
        self.push(Op::SumAll { a }, value, ng, Vec::new())
    }

    /// Mean of every element → `[1]`.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let numel = self.value(a).numel();
        let mut acc = S::zero();
        for &x in self.value(a).data() {
            acc = acc + x;
        }
        let value = Tensor::new(&[1], vec![acc / S::from_usize(numel.max(1))]).expect("scalar");
        let ng = self.nodes[a.0].needs_grad;
        self.push(Op::MeanAll { a }, value, ng, Vec::new())
    }

    /// Reverse accumulation from a single-element loss node.
    ///
    /// Returns one gradient per bound parameter (zeros when the loss does not
    /// depend on it). Fails with the first offending op named if the loss is
    /// non-finite.
    pub fn backward(&mut self, loss: NodeId) -> Result<BTreeMap<String, Tensor<S>>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::arg(alloc::format!(
                "loss must be a single element, got {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.value(loss).data()[0].is_finite() {
            let culprit = self
                .nodes
                .iter()
                .find(|n| !n.value.is_finite())
                .map(|n| n.op.name())
                .unwrap_or("loss");
            return Err(Error::NonFinite(alloc::format!(
                "loss is not finite; first non-finite op: {culprit}"
            )));
        }

        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);
        let mut out: BTreeMap<String, Tensor<S>> = BTreeMap::new();

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(i, &g, &mut grads, &mut out)?;
        }

        // Parameters untouched by the loss still report (zero) gradients.
        for (name, &id) in &self.params {
            out.entry(name.clone())
                .or_insert_with(|| Tensor::zeros(self.nodes[id.0].value.shape()));
        }
        Ok(out)
    }

    /// Accumulate `g` into the inputs of node `i`.
    fn backprop_node(
        &self,
        i: usize,
        g: &[S],
        grads: &mut [Option<Vec<S>>],
        out: &mut BTreeMap<String, Tensor<S>>,
    ) -> Result<()> {
        let node = &self.nodes[i];
        let val = |id: NodeId| self.nodes[id.0].value.data();
        let shape = |id: NodeId| self.nodes[id.0].value.shape();
        let slot = |grads: &mut [Option<Vec<S>>], id: NodeId| -> Option<*mut Vec<S>> {
            if !self.nodes[id.0].needs_grad {
                return None;
            }
            let numel = self.nodes[id.0].value.numel();
            let v = grads[id.0].get_or_insert_with(|| vec![S::zero(); numel]);
            Some(v as *mut Vec<S>)
        };
        // Local helper: add src into the grad slot of `id` if it needs grads.
        macro_rules! acc {
            ($id:expr, $f:expr) => {
                if let Some(p) = slot(grads, $id) {
                    // Safety: `p` points into `grads`, which outlives this call,
                    // and no other reference to that element is alive here.
                    let dst: &mut Vec<S> = unsafe { &mut *p };
                    let f: &mut dyn FnMut(&mut Vec<S>) = &mut $f;
                    f(dst);
                }
            };
        }

        match &node.op {
            Op::Input => {}
            Op::Param { name } => {
                let entry = out
                    .entry(name.clone())
                    .or_insert_with(|| Tensor::zeros(node.value.shape()));
                for (dst, &src) in entry.data_mut().iter_mut().zip(g) {
                    *dst = *dst + src;
                }
            }
            Op::Matmul { a, b } => {
                let (m, k) = (shape(*a)[0], shape(*a)[1]);
                let n = shape(*b)[1];
                acc!(*a, |dst: &mut Vec<S>| {
                    let da = matmul_nt(g, val(*b), m, n, k);
                    add_into(dst, &da);
                });
                acc!(*b, |dst: &mut Vec<S>| {
                    let db = matmul_tn(val(*a), g, k, m, n);
                    add_into(dst, &db);
                });
            }
            Op::Bmm { a, b } => {
                let (bn, m, k) = (shape(*a)[0], shape(*a)[1], shape(*a)[2]);
                let n = shape(*b)[2];
                acc!(*a, |dst: &mut Vec<S>| {
                    for bi in 0..bn {
                        let gslice = &g[bi * m * n..(bi + 1) * m * n];
                        let bv = &val(*b)[bi * k * n..(bi + 1) * k * n];
                        let da = matmul_nt(gslice, bv, m, n, k);
                        add_into(&mut dst[bi * m * k..(bi + 1) * m * k], &da);
                    }
                });
                acc!(*b, |dst: &mut Vec<S>| {
                    for bi in 0..bn {
                        let gslice = &g[bi * m * n..(bi + 1) * m * n];
                        let av = &val(*a)[bi * m * k..(bi + 1) * m * k];
                        let db = matmul_tn(av, gslice, k, m, n);
                        add_into(&mut dst[bi * k * n..(bi + 1) * k * n], &db);
                    }
                });
            }
            Op::Add { a, b } => {
                acc!(*a, |dst: &mut Vec<S>| add_into(dst, g));
                acc!(*b, |dst: &mut Vec<S>| add_into(dst, g));
            }
            Op::Sub { a, b } => {
                acc!(*a, |dst: &mut Vec<S>| add_into(dst, g));
                acc!(*b, |dst: &mut Vec<S>| sub_into(dst, g));
            }
            Op::Mul { a, b } => {
                acc!(*a, |dst: &mut Vec<S>| {
                    for ((d, &gv), &bv) in dst.iter_mut().zip(g).zip(val(*b)) {
                        *d = *d + gv * bv;
                    }
                });
                acc!(*b, |dst: &mut Vec<S>| {
                    for ((d, &gv), &av) in dst.iter_mut().zip(g).zip(val(*a)) {
                        *d = *d + gv * av;
                    }
                });
            }
            Op::Scale { a, c } => {
                let cs = S::from_f64(*c);
                acc!(*a, |dst: &mut Vec<S>| {
                    for (d, &gv) in dst.iter_mut().zip(g) {
                        *d = *d + gv * cs;
                    }
                });
            }
            Op::AddBias { a, bias } => {
                let c = *shape(*bias).first().expect("bias is rank 1");
                acc!(*a, |dst: &mut Vec<S>| add_into(dst, g));
                acc!(*bias, |dst: &mut Vec<S>| {
                    for row in g.chunks_exact(c) {
                        add_into(dst, row);
                    }
                });
            }
            Op::Reshape { a } => {
                acc!(*a, |dst: &mut Vec<S>| add_into(dst, g));
            }
            Op::Permute { a, perm } => {
                // Gradient flows through the inverse permutation.
                let mut inv = vec![0usize; perm.len()];
                for (d, &p) in perm.iter().enumerate() {
                    inv[p] = d;
                }
                let out_shape = node.value.shape();
                acc!(*a, |dst: &mut Vec<S>| {
                    let gperm = permute_flat::<S>(g, out_shape, &inv);
                    add_into(dst, &gperm);
                });
            }
            Op::Concat { parts, axis } => {
                let out_shape = node.value.shape();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let mid_out = out_shape[*axis];
                let mut off = 0usize;
                for &p in parts {
                    let mid_p = shape(p)[*axis];
                    let at = off;
                    acc!(p, |dst: &mut Vec<S>| {
                        for o in 0..outer {
                            let src_at = (o * mid_out + at) * inner;
                            add_into(
                                &mut dst[o * mid_p * inner..(o + 1) * mid_p * inner],
                                &g[src_at..src_at + mid_p * inner],
                            );
                        }
                    });
                    off += mid_p;
                }
            }
            Op::Slice { a, axis, start, len } => {
                let sa = shape(*a);
                let outer: usize = sa[..*axis].iter().product();
                let inner: usize = sa[*axis + 1..].iter().product();
                let mid_in = sa[*axis];
                acc!(*a, |dst: &mut Vec<S>| {
                    for o in 0..outer {
                        let dst_at = (o * mid_in + start) * inner;
                        add_into(
                            &mut dst[dst_at..dst_at + len * inner],
                            &g[o * len * inner..(o + 1) * len * inner],
                        );
                    }
                });
            }
            Op::GatherRows { a, idx } => {
                let c = shape(*a)[1];
                acc!(*a, |dst: &mut Vec<S>| {
                    for (k, &i) in idx.iter().enumerate() {
                        add_into(&mut dst[i * c..(i + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                });
            }
            Op::RowDot { a, b } => {
                let c = shape(*a)[1];
                acc!(*a, |dst: &mut Vec<S>| {
                    for (r, &gv) in g.iter().enumerate() {
                        let brow = &val(*b)[r * c..(r + 1) * c];
                        for (d, &bv) in dst[r * c..(r + 1) * c].iter_mut().zip(brow) {
                            *d = *d + gv * bv;
                        }
                    }
                });
                acc!(*b, |dst: &mut Vec<S>| {
                    for (r, &gv) in g.iter().enumerate() {
                        let arow = &val(*a)[r * c..(r + 1) * c];
                        for (d, &av) in dst[r * c..(r + 1) * c].iter_mut().zip(arow) {
                            *d = *d + gv * av;
                        }
                    }
                });
            }
            Op::RowNorm { a } => {
                let c = shape(*a)[1];
                acc!(*a, |dst: &mut Vec<S>| {
                    for (r, &gv) in g.iter().enumerate() {
                        let norm = node.value.data()[r];
                        if norm <= S::zero() {
                            continue; // subgradient 0 at the origin
                        }
                        let arow = &val(*a)[r * c..(r + 1) * c];
                        for (d, &av) in dst[r * c..(r + 1) * c].iter_mut().zip(arow) {
                            *d = *d + gv * av / norm;
                        }
                    }
                });
            }
            Op::MaxPoolRows { a, .. } => {
                let c = shape(*a)[1];
                acc!(*a, |dst: &mut Vec<S>| {
                    for (k, (&gv, &row)) in g.iter().zip(&node.aux).enumerate() {
                        let j = k % c;
                        dst[row * c + j] = dst[row * c + j] + gv;
                    }
                });
            }
            Op::SoftmaxRows { a } => {
                let c = shape(*a)[1];
                acc!(*a, |dst: &mut Vec<S>| {
                    let y = node.value.data();
                    for r in 0..g.len() / c {
                        let (grow, yrow) = (&g[r * c..(r + 1) * c], &y[r * c..(r + 1) * c]);
                        let mut dot = S::zero();
                        for (&gv, &yv) in grow.iter().zip(yrow) {
                            dot = dot + gv * yv;
                        }
                        for ((d, &gv), &yv) in
                            dst[r * c..(r + 1) * c].iter_mut().zip(grow).zip(yrow)
                        {
                            *d = *d + yv * (gv - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { a, gamma, beta } => {
                let c = shape(*a)[1];
                let r = shape(*a)[0];
                let eps = S::from_f64(LAYER_NORM_EPS);
                acc!(*beta, |dst: &mut Vec<S>| {
                    for row in g.chunks_exact(c) {
                        add_into(dst, row);
                    }
                });
                acc!(*gamma, |dst: &mut Vec<S>| {
                    for ri in 0..r {
                        let xrow = &val(*a)[ri * c..(ri + 1) * c];
                        let (mu, sigma) = row_mean_sigma(xrow, eps);
                        for ((d, &gv), &x) in
                            dst.iter_mut().zip(&g[ri * c..(ri + 1) * c]).zip(xrow)
                        {
                            *d = *d + gv * (x - mu) / sigma;
                        }
                    }
                });
                acc!(*a, |dst: &mut Vec<S>| {
                    let gam = val(*gamma);
                    let inv_c = S::one() / S::from_usize(c);
                    for ri in 0..r {
                        let xrow = &val(*a)[ri * c..(ri + 1) * c];
                        let grow = &g[ri * c..(ri + 1) * c];
                        let (mu, sigma) = row_mean_sigma(xrow, eps);
                        let mut m1 = S::zero();
                        let mut m2 = S::zero();
                        for ((&gv, &gm), &x) in grow.iter().zip(gam).zip(xrow) {
                            let h = gv * gm;
                            m1 = m1 + h;
                            m2 = m2 + h * (x - mu) / sigma;
                        }
                        m1 = m1 * inv_c;
                        m2 = m2 * inv_c;
                        for (((d, &gv), &gm), &x) in dst[ri * c..(ri + 1) * c]
                            .iter_mut()
                            .zip(grow)
                            .zip(gam)
                            .zip(xrow)
                        {
                            let xhat = (x - mu) / sigma;
                            *d = *d + (gv * gm - m1 - xhat * m2) / sigma;
                        }
                    }
                });
            }
            Op::Relu { a } => {
                acc!(*a, |dst: &mut Vec<S>| {
                    for ((d, &gv), &x) in dst.iter_mut().zip(g).zip(val(*a)) {
                        if x > S::zero() {
                            *d = *d + gv;
                        }
                    }
                });
            }
            Op::Gelu { a } => {
                acc!(*a, |dst: &mut Vec<S>| {
                    for ((d, &gv), &x) in dst.iter_mut().zip(g).zip(val(*a)) {
                        *d = *d + gv * gelu_bwd(x);
                    }
                });
            }
            Op::SinusoidalEncode { a, out_dim } => {
                let omegas = sinusoid_freqs::<S>(out_dim / 2);
                acc!(*a, |dst: &mut Vec<S>| {
                    for (k, d) in dst.iter_mut().enumerate() {
                        let x = val(*a)[k];
                        let gblock = &g[k * out_dim..(k + 1) * out_dim];
                        let mut acc = S::zero();
                        for (i, &w) in omegas.iter().enumerate() {
                            let vw = x * w;
                            acc = acc + w * (gblock[2 * i] * vw.cos() - gblock[2 * i + 1] * vw.sin());
                        }
                        *d = *d + acc;
                    }
                });
            }
            Op::SegmentMean { a, segments } => {
                let c = shape(*a)[1];
                acc!(*a, |dst: &mut Vec<S>| {
                    for (si, seg) in segments.iter().enumerate() {
                        if seg.is_empty() {
                            continue;
                        }
                        let inv = S::one() / S::from_usize(seg.len());
                        let grow = &g[si * c..(si + 1) * c];
                        for &ri in seg {
                            for (d, &gv) in dst[ri * c..(ri + 1) * c].iter_mut().zip(grow) {
                                *d = *d + gv * inv;
                            }
                        }
                    }
                });
            }
            Op::SumAll { a } => {
                let gv = g[0];
                acc!(*a, |dst: &mut Vec<S>| {
                    for d in dst.iter_mut() {
                        *d = *d + gv;
                    }
                });
            }
            Op::MeanAll { a } => {
                let gv = g[0] / S::from_usize(self.nodes[a.0].value.numel().max(1));
                acc!(*a, |dst: &mut Vec<S>| {
                    for d in dst.iter_mut() {
                        *d = *d + gv;
                    }
                });
            }
        }
        Ok(())
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

fn sub_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d - s;
    }
}

/// Mean and regularized standard deviation of one row.
fn row_mean_sigma<S: Scalar>(row: &[S], eps: S) -> (S, S) {
    let inv = S::one() / S::from_usize(row.len());
    let mut mu = S::zero();
    for &x in row {
        mu = mu + x;
    }
    mu = mu * inv;
    let mut var = S::zero();
    for &x in row {
        var = var + (x - mu) * (x - mu);
    }
    var = var * inv;
    (mu, (var + eps).sqrt())
}

fn gelu_fwd<S: Scalar>(x: S) -> S {
    let s = S::from_f64(0.797_884_560_802_865_4); // √(2/π)
    let a = S::from_f64(0.044715);
    let half = S::from_f64(0.5);
    let t = (s * (x + a * x * x * x)).tanh();
    half * x * (S::one() + t)
}

fn gelu_bwd<S: Scalar>(x: S) -> S {
    let s = S::from_f64(0.797_884_560_802_865_4);
    let a = S::from_f64(0.044715);
    let half = S::from_f64(0.5);
    let three = S::from_f64(3.0);
    let u = s * (x + a * x * x * x);
    let t = u.tanh();
    let du = s * (S::one() + three * a * x * x);
    half * (S::one() + t) + half * x * (S::one() - t * t) * du
}

/// Geometric frequencies ω_0 = 1 … ω_{H−1} = 1/10000.
fn sinusoid_freqs<S: Scalar>(h: usize) -> Vec<S> {
    if h == 1 {
        return vec![S::one()];
    }
    (0..h)
        .map(|i| S::from_f64(10000f64.powf(-(i as f64) / (h as f64 - 1.0))))
        .collect()
}

fn permute_tensor<S: Scalar>(t: &Tensor<S>, perm: &[usize]) -> Result<Tensor<S>> {
    let rank = t.shape().len();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || core::mem::replace(&mut seen[p], true)) {
        return Err(Error::arg(alloc::format!("permutation {perm:?} for rank {rank}")));
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| t.shape()[p]).collect();
    let data = permute_flat::<S>(t.data(), t.shape(), perm);
    // permute_flat wants the *input* shape; recompute output via strides there.
    Tensor::new(&out_shape, data)
}

/// Reorder a flat row-major buffer: output dim `d` reads input dim `perm[d]`.
fn permute_flat<S: Scalar>(data: &[S], in_shape: &[usize], perm: &[usize]) -> Vec<S> {
    let rank = in_shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let in_strides = strides(in_shape);
    let out_numel: usize = out_shape.iter().product();
    let mut out = Vec::with_capacity(out_numel);
    let mut out_idx = vec![0usize; rank];
    for _ in 0..out_numel {
        let mut flat_in = 0usize;
        for d in 0..rank {
            flat_in += out_idx[d] * in_strides[perm[d]];
        }
        out.push(data[flat_in]);
        // Increment the row-major multi-index.
        for d in (0..rank).rev() {
            out_idx[d] += 1;
            if out_idx[d] < out_shape[d] {
                break;
            }
            out_idx[d] = 0;
        }
    }
    out
}
