//! Deterministic point-cloud primitives: sampling, neighbor search,
//! interpolation, and voxel binning.
//!
//! Every operation is a pure function of its inputs. All tie-breaks
//! (farthest-point candidates, equal neighbor distances, voxel boundaries)
//! resolve to the lowest index, so results are reproducible bit-for-bit.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scalar::Scalar;

/// Regularizer added to every distance in inverse-distance weighting, so a
/// query coincident with a stored point stays finite and recovers that
/// point's feature exactly in the limit.
pub const IDW_EPS: f64 = 1e-8;

/// A set of `n ≥ 1` finite 3D points (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<S> {
    coords: Vec<[S; 3]>,
}

impl<S: Scalar> PointSet<S> {
    /// Build from per-point coordinates; rejects empty input and any
    /// non-finite coordinate.
    pub fn new(coords: Vec<[S; 3]>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::arg("point set must hold at least one point"));
        }
        for (i, p) in coords.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite()) {
                return Err(Error::arg(alloc::format!("point {i} has a non-finite coordinate")));
            }
        }
        Ok(PointSet { coords })
    }

    /// Build from a flat `[x0,y0,z0, x1,y1,z1, …]` buffer.
    pub fn from_flat(flat: &[S]) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(Error::arg("flat coordinate buffer length must be a multiple of 3"));
        }
        let coords = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::new(coords)
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    /// Always false: construction rejects empty sets.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Point `i`.
    pub fn get(&self, i: usize) -> [S; 3] {
        self.coords[i]
    }

    /// All points.
    pub fn coords(&self) -> &[[S; 3]] {
        &self.coords
    }

    /// Flat `[x0,y0,z0, …]` view of the coordinates.
    pub fn flat(&self) -> &[S] {
        self.coords.as_flattened()
    }

    /// Greedy farthest point sampling.
    ///
    /// Starts at `start`; each subsequent pick maximizes the minimum
    /// distance to the already-selected set, ties to the lowest index.
    pub fn farthest_point_sample(&self, k: usize, start: usize) -> Result<Vec<usize>> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::arg(alloc::format!("sample count {k} not in 1..={n}")));
        }
        if start >= n {
            return Err(Error::arg(alloc::format!("start index {start} out of range for {n} points")));
        }
        let mut selected = Vec::with_capacity(k);
        selected.push(start);
        let mut taken = vec![false; n];
        taken[start] = true;
        // min_d2[i] = squared distance from point i to the selected set.
        let mut min_d2 = vec![S::infinity(); n];
        let mut last = start;
        for _ in 1..k {
            let lp = self.coords[last];
            let mut best = usize::MAX;
            let mut best_d2 = S::neg_infinity();
            for (i, (p, m)) in self.coords.iter().zip(min_d2.iter_mut()).enumerate() {
                let d2 = dist2(lp, *p);
                if d2 < *m {
                    *m = d2;
                }
                // Strict '>' with an ascending scan keeps the lowest index on
                // ties; duplicate points (distance 0 everywhere) still yield
                // distinct picks because taken indices are skipped.
                if !taken[i] && *m > best_d2 {
                    best_d2 = *m;
                    best = i;
                }
            }
            selected.push(best);
            taken[best] = true;
            last = best;
        }
        Ok(selected)
    }

    /// Exact k-nearest neighbors for every query point.
    ///
    /// Brute force over all `n` points; equal distances resolve to the
    /// lowest index.
    pub fn knn_query(&self, queries: &PointSet<S>, k: usize) -> Result<Vec<NeighborSet<S>>> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::arg(alloc::format!("neighbor count {k} not in 1..={n}")));
        }
        Ok(queries.coords.iter().map(|q| self.knn_one(*q, k)).collect())
    }

    /// k-nearest neighbors of a single point.
    fn knn_one(&self, q: [S; 3], k: usize) -> NeighborSet<S> {
        // Max-heap of the k best (d², index) pairs; the lexicographic order
        // on (d², index) is the tie rule.
        let mut heap: Vec<(S, usize)> = Vec::with_capacity(k + 1);
        for (i, p) in self.coords.iter().enumerate() {
            let d2 = dist2(q, *p);
            if heap.len() == k {
                let &(worst_d2, worst_i) = heap.first().expect("heap is non-empty at capacity");
                if (d2, i) >= (worst_d2, worst_i) {
                    continue;
                }
                heap_pop_root(&mut heap);
            }
            heap_push(&mut heap, (d2, i));
        }
        heap.sort_unstable_by(cmp_pair);
        NeighborSet {
            indices: heap.iter().map(|&(_, i)| i).collect(),
            distances: heap.iter().map(|&(d2, _)| d2.sqrt()).collect(),
        }
    }

    /// Feature interpolation from the `k` nearest neighbors with weights
    /// proportional to inverse distance, `w_j ∝ 1/(d_j + eps)`, normalized
    /// to sum to 1.
    ///
    /// `features` is row-major `[n, feat_dim]`, aligned with this set.
    pub fn inverse_distance_interpolate(
        &self,
        query: [S; 3],
        features: &[S],
        feat_dim: usize,
        k: usize,
        eps: S,
    ) -> Result<Vec<S>> {
        let n = self.len();
        if features.len() != n * feat_dim {
            return Err(Error::arg(alloc::format!(
                "feature buffer holds {} values, want {n}×{feat_dim}",
                features.len()
            )));
        }
        if k == 0 || k > n {
            return Err(Error::arg(alloc::format!("neighbor count {k} not in 1..={n}")));
        }
        let nbrs = self.knn_one(query, k);
        let mut weights = Vec::with_capacity(k);
        let mut total = S::zero();
        for &d in &nbrs.distances {
            let w = S::one() / (d + eps);
            weights.push(w);
            total = total + w;
        }
        let mut out = vec![S::zero(); feat_dim];
        for (&idx, &w) in nbrs.indices.iter().zip(&weights) {
            let wn = w / total;
            let row = &features[idx * feat_dim..(idx + 1) * feat_dim];
            for (o, &f) in out.iter_mut().zip(row) {
                *o = *o + wn * f;
            }
        }
        Ok(out)
    }

    /// Bin points into the `a³` equal sub-cubes of `[center−r, center+r]³`.
    ///
    /// Returns one index list per sub-cube, flattened as `ix·a² + iy·a + iz`.
    /// A coordinate exactly on an internal face goes to the lower cell;
    /// points outside the closed cube appear in no list.
    pub fn voxel_bin(&self, center: [S; 3], radius: S, resolution: usize) -> Result<Vec<Vec<usize>>> {
        if !(radius > S::zero()) {
            return Err(Error::arg("voxel radius must be positive"));
        }
        if resolution == 0 {
            return Err(Error::arg("voxel resolution must be at least 1"));
        }
        let a = resolution;
        let scale = S::from_usize(a) / (radius + radius);
        let mut cells = vec![Vec::new(); a * a * a];
        'points: for (i, p) in self.coords.iter().enumerate() {
            let mut cell = [0usize; 3];
            for axis in 0..3 {
                let u = (p[axis] - (center[axis] - radius)) * scale;
                if u < S::zero() || u > S::from_usize(a) {
                    continue 'points;
                }
                // ceil(u) − 1 sends an exact face hit to the lower cell; the
                // clamp keeps the two outer faces inside the grid.
                let c = u.ceil().to_f64() as isize - 1;
                cell[axis] = c.clamp(0, a as isize - 1) as usize;
            }
            cells[cell[0] * a * a + cell[1] * a + cell[2]].push(i);
        }
        Ok(cells)
    }

    /// `m` distinct indices drawn without replacement from a deterministic
    /// generator; the same seed always yields the same list.
    pub fn random_subsample(&self, m: usize, seed: u64) -> Result<Vec<usize>> {
        let n = self.len();
        if m > n {
            return Err(Error::arg(alloc::format!("subsample size {m} exceeds {n} points")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = substream(seed, "geom.random_subsample");
        // Partial Fisher–Yates: after i swaps the first i entries are the sample.
        for i in 0..m {
            let j = i + rng.gen_range(0..n - i);
            idx.swap(i, j);
        }
        idx.truncate(m);
        Ok(idx)
    }
}

/// `k` nearest neighbors of one query: indices into a [`PointSet`] and the
/// matching Euclidean distances, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet<S> {
    /// Neighbor indices, ordered by ascending distance (ties: lowest index).
    pub indices: Vec<usize>,
    /// Euclidean distances aligned with `indices`.
    pub distances: Vec<S>,
}

/// Squared Euclidean distance.
#[inline]
pub fn dist2<S: Scalar>(a: [S; 3], b: [S; 3]) -> S {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Total order on (d², index) pairs; distances are finite by construction.
fn cmp_pair<S: Scalar>(a: &(S, usize), b: &(S, usize)) -> core::cmp::Ordering {
    match a.0.partial_cmp(&b.0) {
        Some(core::cmp::Ordering::Equal) | None => a.1.cmp(&b.1),
        Some(ord) => ord,
    }
}

/// Push onto a binary max-heap ordered by [`cmp_pair`].
fn heap_push<S: Scalar>(heap: &mut Vec<(S, usize)>, item: (S, usize)) {
    heap.push(item);
    let mut i = heap.len() - 1;
    while i > 0 {
        let parent = (i - 1) / 2;
        if cmp_pair(&heap[i], &heap[parent]) == core::cmp::Ordering::Greater {
            heap.swap(i, parent);
            i = parent;
        } else {
            break;
        }
    }
}

/// Remove the maximum element of a binary max-heap ordered by [`cmp_pair`].
fn heap_pop_root<S: Scalar>(heap: &mut Vec<(S, usize)>) {
    let last = heap.len() - 1;
    heap.swap(0, last);
    heap.pop();
    let len = heap.len();
    let mut i = 0;
    loop {
        let (l, r) = (2 * i + 1, 2 * i + 2);
        let mut largest = i;
        if l < len && cmp_pair(&heap[l], &heap[largest]) == core::cmp::Ordering::Greater {
            largest = l;
        }
        if r < len && cmp_pair(&heap[r], &heap[largest]) == core::cmp::Ordering::Greater {
            largest = r;
        }
        if largest == i {
            break;
        }
        heap.swap(i, largest);
        i = largest;
    }
}
