//! Dense row-major tensors and the hot linear-algebra kernels.
//!
//! Shapes are explicit (`&[usize]`), storage is one contiguous `Vec` in
//! C order. All kernels accumulate in a fixed loop order, so results are
//! bit-identical across runs; with the `parallel` feature, work is split
//! only over independent output rows, which preserves that guarantee for
//! any thread count.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense tensor with row-major contiguous storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Build a tensor from a shape and matching flat data.
    pub fn new(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::arg(alloc::format!(
                "shape {shape:?} wants {numel} elements, data has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// All-zeros tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![S::zero(); numel] }
    }

    /// Constant-filled tensor of the given shape.
    pub fn full(shape: &[usize], value: S) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    /// Shape as a slice, outermost dimension first.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Total number of elements.
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Flat row-major view of the data.
    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Mutable flat row-major view of the data.
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Consume into the flat data vector.
    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Same data under a new shape (element count must match).
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::arg(alloc::format!(
                "cannot reshape {:?} ({} elements) to {shape:?} ({numel})",
                self.shape,
                self.data.len()
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[S] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    /// True if every element is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Row-major strides for a shape (innermost stride is 1).
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * shape[i + 1];
    }
    out
}

#[cfg(feature = "parallel")]
fn for_each_row<S: Send, F: Fn(usize, &mut [S]) + Sync>(out: &mut [S], cols: usize, f: F) {
    use rayon::prelude::*;
    // One task per output row keeps the per-row accumulation order fixed,
    // so any thread count produces identical bits.
    out.par_chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
fn for_each_row<S, F: Fn(usize, &mut [S])>(out: &mut [S], cols: usize, f: F) {
    for (i, row) in out.chunks_mut(cols).enumerate() {
        f(i, row);
    }
}

/// `C = A · B` for `A: [m, k]`, `B: [k, n]` (flat row-major slices).
pub fn matmul<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![S::zero(); m * n];
    for_each_row(&mut c, n, |i, crow| {
        let arow = &a[i * k..(i + 1) * k];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj = *cj + aik * bj;
            }
        }
    });
    c
}

/// `C = A · Bᵀ` for `A: [m, k]`, `B: [n, k]`.
pub fn matmul_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut c = vec![S::zero(); m * n];
    for_each_row(&mut c, n, |i, crow| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, cj) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc = acc + av * bv;
            }
            *cj = acc;
        }
    });
    c
}

/// `C = Aᵀ · B` for `A: [k, m]`, `B: [k, n]`.
pub fn matmul_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![S::zero(); m * n];
    for_each_row(&mut c, n, |i, crow| {
        for kk in 0..k {
            let aki = a[kk * m + i];
            let brow = &b[kk * n..(kk + 1) * n];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj = *cj + aki * bj;
            }
        }
    });
    c
}

/// Euclidean dot product of two equal-length slices.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (&av, &bv) in a.iter().zip(b) {
        acc = acc + av * bv;
    }
    acc
}
