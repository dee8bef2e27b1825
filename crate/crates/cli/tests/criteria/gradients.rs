//! Criterion 2: the analytic gradients of the full window loss — encoder,
//! correlation, transformer, predictor — agree with central finite
//! differences on a 64-bit micro model.

use pcst_core::trainer::verify_gradients;

use crate::micro_tracker;

pub fn c02_gradient_audit() {
    let tracker = micro_tracker(4, 2);
    let audit = crate::within_budget("gradient audit", 300, || {
        verify_gradients::<f64>(&tracker, 0.8, 400, 11).expect("gradient audit")
    });

    assert!(
        audit.report.overall_max < 1e-4,
        "worst relative gradient error {} is not below 1e-4",
        audit.report.overall_max
    );
    assert!(audit.report.probes > 0, "no scalar was probed");
    assert!(
        !audit.report.per_param.is_empty(),
        "no parameter appears in the probe report"
    );
    for (name, worst) in &audit.report.per_param {
        assert!(*worst < 1e-4, "parameter {name} disagrees with finite differences: {worst}");
    }

    // The loss pulls on the zero-initialized final predictor layer, so
    // training can move it off the identity.
    assert!(
        audit.zero_head_grad_linf > 0.0,
        "no gradient reaches the zero predictor head"
    );

    // Every trainable tensor is listed exactly once.
    let mut names = audit.params.clone();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), audit.params.len(), "duplicate parameter names");
    assert!(!audit.params.is_empty());

    // The audit insists on 64-bit arithmetic and a genuinely micro model.
    assert!(verify_gradients::<f32>(&tracker, 0.8, 4, 0).is_err());
    let mut big = micro_tracker(4, 2);
    big.backbone.channels = 64;
    assert!(verify_gradients::<f64>(&big, 0.8, 4, 0).is_err());
}
