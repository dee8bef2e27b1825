//! Floating-point abstraction so every kernel runs in f32 or f64.

use core::fmt::{Debug, Display};
use num_traits::float::{Float, FloatConst};

/// Runtime tag for the element type of a tensor or parameter store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    /// Stable textual name, used in file headers and reports.
    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    /// Size of one element in bytes.
    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl Display for Dtype {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Element type for all numeric kernels: `f32` or `f64`.
///
/// Conversions through `f64` are exact for both implementors (`f32 → f64` is
/// lossless), which file codecs rely on for bit-identical round trips.
pub trait Scalar:
    Float + FloatConst + Debug + Display + Default + Send + Sync + 'static
{
    /// Runtime tag for this element type.
    const DTYPE: Dtype;

    /// Exact conversion from `f64` (rounds once for `f32`).
    fn from_f64(x: f64) -> Self;

    /// Lossless widening to `f64`.
    fn to_f64(self) -> f64;

    /// Conversion from a count or index.
    fn from_usize(x: usize) -> Self {
        Self::from_f64(x as f64)
    }
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
