//! Long-term 3D point trajectory tracking over point-cloud sequences.
//!
//! The crate provides everything needed to train and run a tracker that,
//! given a sequence of point-cloud frames and a set of query points, predicts
//! one 3D trajectory per query across the whole sequence:
//!
//! - [`geom`]: deterministic point-cloud primitives (farthest point sampling,
//!   exact k-nearest neighbors, inverse-distance interpolation, voxel binning).
//! - [`tensor`] and [`graph`]: a small dense tensor type and a reverse-mode
//!   automatic differentiation graph built on it.
//! - [`nn`]: neural building blocks (linear layers, layer norm, multi-head
//!   attention, sinusoidal encodings) expressed as graph ops.
//! - [`backbone`], [`correlation`], [`sttu`]: the model itself — per-frame
//!   feature extraction, truncated point/voxel correlation, and the iterative
//!   spatio-temporal trajectory update.
//! - [`tracker`]: sliding-window inference over arbitrarily long sequences.
//! - [`synth`]: synthetic scene generation with exact ground-truth
//!   trajectories and occlusion flags.
//! - [`trainer`]: loss, optimizer, LR schedule, and the training loop.
//! - [`metrics`]: trajectory evaluation (end-point error, accuracy
//!   thresholds, survival, drift, occlusion breakdowns).
//!
//! The crate is `no_std`-compatible (with `alloc`); the `std` feature (on by
//! default) enables OS-dependent conveniences and the `parallel` feature adds
//! multi-threaded evaluation of independent work items via rayon.
//!
//! Determinism is a design contract throughout: all randomness flows from
//! explicit seeds, all reductions have fixed orders, and ties in selection
//! ops resolve to the lowest index, so identical inputs give bit-identical
//! outputs.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod backbone;
pub mod correlation;
pub mod error;
pub mod geom;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod sttu;
pub mod synth;
pub mod tensor;
pub mod tracker;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
