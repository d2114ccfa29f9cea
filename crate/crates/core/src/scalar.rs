use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FloatConst};
use rustfft::FftNum;

/// Floating-point element type usable by the tensor engine and the DSP code.
///
/// Training runs in `f32`; gradient verification re-runs the same code in `f64`.
pub trait Scalar: Float + FloatConst + FftNum + Default + Debug + Sum + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
