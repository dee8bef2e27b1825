//! Precision conversions between on-disk `f32` artifacts and in-memory
//! stores/records at either precision. Widening `f32 → f64` is exact;
//! narrowing rounds once per value.

use pcst_core::geom::PointSet;
use pcst_core::nn::ParamStore;
use pcst_core::scalar::Scalar;
use pcst_core::synth::SequenceRecord;
use pcst_core::tensor::Tensor;

/// Widen a sequence record to any scalar type (exact for `f64`).
pub fn lift_record<S: Scalar>(record: &SequenceRecord<f32>) -> SequenceRecord<S> {
    let frames = record
        .frames
        .iter()
        .map(|f| {
            let coords = f
                .coords()
                .iter()
                .map(|p| {
                    [
                        S::from_f64(p[0] as f64),
                        S::from_f64(p[1] as f64),
                        S::from_f64(p[2] as f64),
                    ]
                })
                .collect();
            PointSet::new(coords).expect("finite coordinates stay finite when widened")
        })
        .collect();
    SequenceRecord {
        spec: record.spec.clone(),
        frames,
        gt: lift_tensor(&record.gt),
        visibility: record.visibility.clone(),
    }
}

/// Widen a tensor elementwise (exact for `f64`).
pub fn lift_tensor<S: Scalar>(t: &Tensor<f32>) -> Tensor<S> {
    let data = t.data().iter().map(|&v| S::from_f64(v as f64)).collect();
    Tensor::new(t.shape(), data).expect("shape is preserved")
}

/// Narrow a tensor to `f32`, rounding once per value.
pub fn lower_tensor<S: Scalar>(t: &Tensor<S>) -> Tensor<f32> {
    let data = t.data().iter().map(|&v| v.to_f64() as f32).collect();
    Tensor::new(t.shape(), data).expect("shape is preserved")
}

/// Widen a parameter store to `f64` exactly, preserving order and seed.
pub fn lift_store(store: &ParamStore<f32>) -> ParamStore<f64> {
    let mut out = ParamStore::<f64>::new(store.seed());
    for (name, tensor) in store.iter() {
        out.set(name, lift_tensor(tensor));
    }
    out
}
