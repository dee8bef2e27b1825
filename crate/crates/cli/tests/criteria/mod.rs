//! Shared plumbing for the acceptance criteria: tolerance helpers, the
//! reference model shapes, and scene builders reused across checks.

mod commands;
mod files;
mod gradients;
mod learning;
mod oracles;
mod pipeline;

pub use commands::{c09_ablation_machinery, c10_reproducibility};
pub use files::c11_format_robustness;
pub use gradients::c02_gradient_audit;
pub use learning::{c06_micro_overfit, c07_generalization};
pub use oracles::{c01_oracle_equivalence, c04_window_plan, c05_loss_weights, c08_metric_sanity};
pub use pipeline::c03_identity_invariant;

use pcst_core::correlation::CorrelationConfig;
use pcst_core::sttu::SttuConfig;
use pcst_core::tracker::TrackerConfig;
use pcst_core::backbone::BackboneConfig;

/// Absolute-or-relative closeness: |a − b| ≤ tol·max(1, |a|, |b|).
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1.0_f64.max(a.abs()).max(b.abs())
}

/// Run `f` and fail if it exceeds its wall-clock budget.
pub fn within_budget<R>(label: &str, budget_secs: u64, f: impl FnOnce() -> R) -> R {
    let start = std::time::Instant::now();
    let out = f();
    let took = start.elapsed().as_secs_f64();
    assert!(
        took <= budget_secs as f64,
        "{label} took {took:.1} s, over its {budget_secs} s budget"
    );
    out
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!(close(a, b, tol), "{what}: {a} vs {b} (tol {tol})");
}

/// Smallest model the refinement pipeline accepts; used where the check is
/// about structure or determinism rather than accuracy.
pub fn micro_tracker(window: usize, iterations: usize) -> TrackerConfig {
    TrackerConfig {
        window_length: window,
        iterations,
        init_knn: 3,
        backbone: BackboneConfig { channels: 8, k_enc: 4 },
        correlation: CorrelationConfig {
            m_trunc: 8,
            m_k: 4,
            radii: vec![0.5, 1.0],
            resolution: 2,
            width: 6,
            ..CorrelationConfig::default()
        },
        sttu: SttuConfig {
            depth_m: 1,
            heads: 2,
            flow_embed_width: 6,
            pos_embed_width: 6,
            time_embed_width: 4,
            mlp_ratio: 2,
            predictor_hidden: 8,
        },
        ..TrackerConfig::default()
    }
}

/// Mid-size model used by the quantitative training checks: big enough to
/// learn, small enough for a single desktop core.
pub fn desk_tracker(window: usize) -> TrackerConfig {
    TrackerConfig {
        window_length: window,
        iterations: 4,
        init_knn: 3,
        backbone: BackboneConfig { channels: 16, k_enc: 6 },
        correlation: CorrelationConfig {
            m_trunc: 16,
            m_k: 8,
            radii: vec![0.5, 1.0],
            resolution: 2,
            width: 12,
            ..CorrelationConfig::default()
        },
        sttu: SttuConfig {
            depth_m: 1,
            heads: 2,
            flow_embed_width: 12,
            pos_embed_width: 12,
            time_embed_width: 8,
            mlp_ratio: 2,
            predictor_hidden: 16,
        },
        ..TrackerConfig::default()
    }
}
