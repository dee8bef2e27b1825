//! Unrolled-window training: iteration-weighted trajectory loss, a
//! decoupled-weight-decay adaptive optimizer under a one-cycle schedule,
//! and a finite-difference audit of the full pipeline's gradients.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::{grad_check, GradReport, ParamStore};
use crate::rng::{substream, substream_n};
use crate::scalar::{Dtype, Scalar};
use crate::synth::{sample_queries, SceneSpec, SequenceRecord};
use crate::tensor::Tensor;
use crate::tracker::{carry_state, plan_windows, run_window_graph, TrackerConfig, TrajectoryState, WindowInit};

/// Parameter name of the predictor's final (zero-initialized) layer weight.
const PREDICTOR_FINAL_WEIGHT: &str = "sttu.pred.1.weight";

/// Floating-point width a run executes in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    F32,
    F64,
}

impl Default for Precision {
    fn default() -> Self {
        Precision::F32
    }
}

/// Training loop settings. The refinement model itself (window length,
/// iteration count, widths) lives in the embedded tracker configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Peak learning rate (0 freezes the optimizer).
    pub lr: f64,
    pub steps: usize,
    /// Records sampled per optimizer step; gradients are averaged.
    pub batch: usize,
    /// Queries drawn per sampled record.
    pub queries: usize,
    /// Discount applied to earlier refinement iterations' losses.
    pub gamma: f64,
    pub weight_decay: f64,
    /// Fraction of steps spent in linear warmup to the peak rate.
    pub warmup_frac: f64,
    /// Final learning rate as a fraction of the peak.
    pub final_lr_frac: f64,
    /// Emit a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: usize,
    pub seed: u64,
    pub precision: Precision,
    pub tracker: TrackerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            steps: 500,
            batch: 1,
            queries: 16,
            gamma: 0.8,
            weight_decay: 1e-4,
            warmup_frac: 0.05,
            final_lr_frac: 0.01,
            checkpoint_every: 0,
            seed: 0,
            precision: Precision::F32,
            tracker: TrackerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::arg("learning rate must be finite and ≥ 0"));
        }
        if self.steps == 0 {
            return Err(Error::arg("training needs at least one step"));
        }
        if self.batch == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        if self.queries == 0 {
            return Err(Error::arg("need at least one query per sample"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::arg(format!(
                "iteration discount {} outside (0, 1]",
                self.gamma
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::arg("weight decay must be ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::arg("warmup fraction must lie in [0, 1]"));
        }
        if !(self.final_lr_frac > 0.0 && self.final_lr_frac <= 1.0) {
            return Err(Error::arg("final LR fraction must lie in (0, 1]"));
        }
        self.tracker.validate()
    }
}

/// Iteration-weighted trajectory loss over one window, built on the graph.
///
/// Each of the `K` snapshots contributes its mean per-row Euclidean distance
/// to `gt`, weighted `gamma^(K−1−k)` so the final iteration carries weight 1
/// and earlier iterations are discounted.
pub fn window_loss_node<S: Scalar>(
    g: &mut Graph<S>,
    snapshots: &[NodeId],
    gt: NodeId,
    gamma: f64,
) -> Result<NodeId> {
    if snapshots.is_empty() {
        return Err(Error::arg("loss needs at least one refinement snapshot"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::arg(format!("iteration discount {gamma} outside (0, 1]")));
    }
    let gt_shape = g.value(gt).shape().to_vec();
    let k_total = snapshots.len();
    let mut total: Option<NodeId> = None;
    for (k, &snap) in snapshots.iter().enumerate() {
        let snap_shape = g.value(snap).shape();
        if snap_shape != gt_shape.as_slice() {
            return Err(Error::arg(format!(
                "snapshot {k} shape {snap_shape:?} does not match ground truth {gt_shape:?}"
            )));
        }
        let diff = g.sub(snap, gt)?;
        let norms = g.row_norm(diff)?;
        let mean = g.mean_all(norms);
        let weighted = g.scale(mean, gamma.powi((k_total - 1 - k) as i32));
        total = Some(match total {
            None => weighted,
            Some(acc) => g.add(acc, weighted)?,
        });
    }
    Ok(total.expect("at least one snapshot"))
}

/// Flatten `[T, N, 3]` to `[T·N, 3]` (rank-2 input passes through).
fn as_rows<S: Scalar>(t: &Tensor<S>) -> Result<Tensor<S>> {
    let shape = t.shape();
    match shape.len() {
        2 if shape[1] == 3 => Ok(t.clone()),
        3 if shape[2] == 3 => t.clone().reshape(&[shape[0] * shape[1], 3]),
        _ => Err(Error::arg(format!("expected […, 3] positions, got {shape:?}"))),
    }
}

/// At-rest value of the iteration-weighted window loss.
pub fn window_loss<S: Scalar>(
    snapshots: &[Tensor<S>],
    gt: &Tensor<S>,
    gamma: f64,
) -> Result<S> {
    let mut g = Graph::new();
    let gt_node = g.input(as_rows(gt)?);
    let nodes: Vec<NodeId> = snapshots
        .iter()
        .map(|s| Ok(g.input(as_rows(s)?)))
        .collect::<Result<_>>()?;
    let loss = window_loss_node(&mut g, &nodes, gt_node, gamma)?;
    Ok(g.value(loss).data()[0])
}

/// One-cycle-shaped learning rate: linear warmup to the peak over
/// `warmup_frac` of the steps, then cosine decay to `final_frac · peak`,
/// hitting the floor exactly on the last step.
pub fn one_cycle_lr(
    step: usize,
    total_steps: usize,
    peak: f64,
    warmup_frac: f64,
    final_frac: f64,
) -> f64 {
    debug_assert!(step < total_steps.max(1));
    let warmup = ((total_steps as f64 * warmup_frac).round() as usize).max(1);
    if step < warmup {
        return peak * (step + 1) as f64 / warmup as f64;
    }
    let floor = peak * final_frac;
    let span = (total_steps - 1).saturating_sub(warmup).max(1);
    let progress = (step - warmup) as f64 / span as f64;
    floor + (peak - floor) * 0.5 * (1.0 + (core::f64::consts::PI * progress).cos())
}

/// Adaptive-moment optimizer with decoupled weight decay. Moments are keyed
/// by parameter name, so step order never affects the result.
pub struct AdamW<S> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: BTreeMap<String, Vec<S>>,
    v: BTreeMap<String, Vec<S>>,
    t: u32,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            t: 0,
        }
    }

    /// Apply one update from `grads`; parameters without a gradient entry
    /// are left untouched (no decay either).
    pub fn step(
        &mut self,
        store: &mut ParamStore<S>,
        grads: &BTreeMap<String, Tensor<S>>,
        lr: f64,
    ) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (S::from_f64(self.beta1), S::from_f64(self.beta2));
        let one = S::one();
        let (c1, c2) = (S::from_f64(1.0 / bc1), S::from_f64(1.0 / bc2));
        let eps = S::from_f64(self.eps);
        let lr_s = S::from_f64(lr);
        let decay = S::from_f64(lr * self.weight_decay);
        for (name, grad) in grads {
            let param = store
                .get_mut(name)
                .ok_or_else(|| Error::arg(format!("gradient for unknown parameter {name}")))?;
            if param.shape() != grad.shape() {
                return Err(Error::arg(format!(
                    "gradient shape {:?} does not match parameter {name} {:?}",
                    grad.shape(),
                    param.shape()
                )));
            }
            let n = param.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| alloc::vec![S::zero(); n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| alloc::vec![S::zero(); n]);
            let p = param.data_mut();
            for i in 0..n {
                let gi = grad.data()[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] * c1;
                let v_hat = v[i] * c2;
                p[i] = p[i] - lr_s * (m_hat / (v_hat.sqrt() + eps)) - decay * p[i];
            }
        }
        Ok(())
    }
}

/// One emitted training-step record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Train the tracker on `records` by unrolled windows.
///
/// Each step samples a record (and fresh queries at frame 0), runs its
/// window chain sequentially — gradients flow through all `K` iterations of
/// a window but are detached at window boundaries — sums the window losses,
/// and applies one optimizer update. `on_step` observes every step together
/// with the current parameters (for streaming logs and checkpoints).
///
/// A non-finite loss aborts with the parameters restored to the last
/// completed step.
pub fn train<S: Scalar>(
    records: &[SequenceRecord<S>],
    cfg: &TrainConfig,
    store: &mut ParamStore<S>,
    mut on_step: impl FnMut(&StepLog, &ParamStore<S>),
) -> Result<Vec<StepLog>> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::arg("training needs at least one record"));
    }
    for (i, r) in records.iter().enumerate() {
        if r.num_frames() < cfg.tracker.window_length {
            return Err(Error::arg(format!(
                "record {i} has {} frames, shorter than the {}-frame window",
                r.num_frames(),
                cfg.tracker.window_length
            )));
        }
    }
    let mut sampler = substream(cfg.seed, "trainer.sampler");
    let mut optimizer = AdamW::new(cfg.weight_decay);
    let mut curve = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let before = store.clone();
        let (step_loss, mut grad_acc) = match train_step(records, cfg, store, &mut sampler) {
            Ok(outcome) => outcome,
            Err(e) => {
                *store = before;
                return Err(match e {
                    Error::NonFinite(inner) => Error::NonFinite(format!(
                        "step {step} aborted: {inner}; parameters restored to the last completed step"
                    )),
                    other => other,
                });
            }
        };

        if cfg.batch > 1 {
            let inv = S::from_f64(1.0 / cfg.batch as f64);
            for grad in grad_acc.values_mut() {
                for gv in grad.data_mut() {
                    *gv = *gv * inv;
                }
            }
        }
        let lr = one_cycle_lr(step, cfg.steps, cfg.lr, cfg.warmup_frac, cfg.final_lr_frac);
        optimizer.step(store, &grad_acc, lr)?;
        let log = StepLog { step, loss: step_loss / cfg.batch as f64, lr };
        on_step(&log, store);
        curve.push(log);
    }
    Ok(curve)
}

/// Run one optimizer step's forward/backward work: sample `batch` records,
/// roll their window chains, and accumulate gradients. Returns the summed
/// loss and the gradient accumulator.
fn train_step<S: Scalar>(
    records: &[SequenceRecord<S>],
    cfg: &TrainConfig,
    store: &mut ParamStore<S>,
    sampler: &mut rand_chacha::ChaCha8Rng,
) -> Result<(f64, BTreeMap<String, Tensor<S>>)> {
    let c = cfg.tracker.backbone.channels;
    let n = cfg.queries;
    let mut grad_acc: BTreeMap<String, Tensor<S>> = BTreeMap::new();
    let mut step_loss = 0.0;

    for _ in 0..cfg.batch {
        let record = &records[sampler.gen_range(0..records.len())];
        let qseed = sampler.gen::<u64>();
        let sample = sample_queries(record, n, 0, qseed)?;
        let plan = plan_windows(record.num_frames(), cfg.tracker.window_length)?;

        let mut state: Option<TrajectoryState<S>> = None;
        let mut prev_span = plan.windows[0];
        for &(start, end) in &plan.windows {
            let carried = match state.take() {
                Some(prev) => Some(carry_state(&prev, prev_span, (start, end), c)?),
                None => None,
            };
            let mut g = Graph::new();
            let rollout = run_window_graph(
                &mut g,
                store,
                &cfg.tracker,
                &record.frames[start..end],
                match &carried {
                    None => WindowInit::Queries { queries: &sample.queries, query_frame: 0 },
                    Some(s) => WindowInit::State(s),
                },
            )?;
            let gt_win = Tensor::new(
                &[(end - start) * n, 3],
                sample.gt.data()[start * n * 3..end * n * 3].to_vec(),
            )?;
            let gt_node = g.input(gt_win);
            let loss = window_loss_node(&mut g, &rollout.snapshots, gt_node, cfg.gamma)?;
            let loss_val = g.value(loss).data()[0].to_f64();
            if !loss_val.is_finite() {
                return Err(Error::NonFinite("training loss became non-finite".into()));
            }
            step_loss += loss_val;

            let next_state = TrajectoryState {
                q_xyz: g.value(rollout.q_xyz).clone(),
                q_feat: g.value(rollout.q_feat).clone(),
                iteration: cfg.tracker.iterations,
                query_frame: 0,
                t: end - start,
                n,
            };
            for (name, grad) in g.backward(loss)? {
                match grad_acc.get_mut(&name) {
                    Some(acc) => {
                        for (a, &gv) in acc.data_mut().iter_mut().zip(grad.data()) {
                            *a = *a + gv;
                        }
                    }
                    None => {
                        grad_acc.insert(name, grad);
                    }
                }
            }
            state = Some(next_state);
            prev_span = (start, end);
        }
    }
    Ok((step_loss, grad_acc))
}

/// Outcome of the finite-difference gradient audit.
#[derive(Debug, Clone)]
pub struct GradVerification {
    /// Central-difference comparison over probed parameter scalars.
    pub report: GradReport,
    /// Every trainable parameter name, each exactly once, sorted.
    pub params: Vec<String>,
    /// Largest-magnitude analytic gradient reaching the predictor's final
    /// layer while that layer is still all-zero.
    pub zero_head_grad_linf: f64,
}

/// Audit analytic gradients of the full window loss — encoder through
/// correlation, transformer, and predictor — against central finite
/// differences on a deliberately tiny model.
///
/// Requires the 64-bit scalar and a micro configuration (≤ 8 feature
/// channels, window ≤ 4); anything larger makes finite differences both
/// slow and noisy.
pub fn verify_gradients<S: Scalar>(
    tracker: &TrackerConfig,
    gamma: f64,
    max_probes: usize,
    seed: u64,
) -> Result<GradVerification> {
    if S::DTYPE != Dtype::F64 {
        return Err(Error::arg("gradient verification requires the 64-bit scalar"));
    }
    tracker.validate()?;
    if tracker.backbone.channels > 8 || tracker.window_length > 4 {
        return Err(Error::arg(
            "gradient verification needs a micro model: ≤ 8 channels and window ≤ 4",
        ));
    }
    let scene = SceneSpec {
        seed,
        frames: tracker.window_length,
        points_per_frame: 64,
        background_points: 16,
        bodies: 1,
        body_size: (0.3, 0.5),
        linear_speed: (0.05, 0.08),
        angular_speed: (0.05, 0.08),
        sheet: false,
        occluder: false,
        trajectories: 4,
        ..SceneSpec::default()
    };
    let record = crate::synth::generate::<S>(&scene)?;
    let n = 4;
    let sample = sample_queries(&record, n, 0, seed)?;
    let gt = Tensor::new(
        &[tracker.window_length * n, 3],
        sample.gt.data().to_vec(),
    )?;

    let build = |ps: &mut ParamStore<S>, g: &mut Graph<S>| -> Result<NodeId> {
        let rollout = run_window_graph(
            g,
            ps,
            tracker,
            &record.frames,
            WindowInit::Queries { queries: &sample.queries, query_frame: 0 },
        )?;
        let gt_node = g.input(gt.clone());
        window_loss_node(g, &rollout.snapshots, gt_node, gamma)
    };

    // Materialize every parameter, then record how strongly the loss pulls
    // on the still-zero predictor head.
    let mut store = ParamStore::new(seed);
    let zero_head_grad_linf = {
        let mut g = Graph::new();
        let loss = build(&mut store, &mut g)?;
        let grads = g.backward(loss)?;
        grads
            .get(PREDICTOR_FINAL_WEIGHT)
            .map(|t| t.data().iter().fold(0.0, |acc, &v| v.to_f64().abs().max(acc)))
            .unwrap_or(0.0)
    };

    // A zero head blocks gradients from reaching anything upstream of the
    // predictor, so randomize it slightly before the finite-difference pass.
    {
        let mut rng = substream_n(seed, "trainer.verify.head", 1);
        let head = store
            .get_mut(PREDICTOR_FINAL_WEIGHT)
            .ok_or_else(|| Error::arg("predictor head parameter missing after warm-up"))?;
        for v in head.data_mut() {
            *v = S::from_f64(0.1 * (rng.gen::<f64>() - 0.5));
        }
    }

    let builder = move |ps: &ParamStore<S>, g: &mut Graph<S>| -> Result<NodeId> {
        let mut bound = ps.clone();
        build(&mut bound, g)
    };
    let report = grad_check(&store, &builder, 1e-5, max_probes, seed)?;
    let params: Vec<String> = store.iter().map(|(name, _)| name.to_string()).collect();
    Ok(GradVerification { report, params, zero_head_grad_linf })
}
