//! Scalar abstraction for the numeric pipeline.
//!
//! Everything downstream of the wire format (FFT, features, network math,
//! statistics) is generic over [`Real`]. Trace and model files always store
//! binary32 on disk, so `f32` is the native pipeline width; `f64` exists for
//! high-precision verification such as FFT and gradient oracles.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, NumCast, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + NumCast
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Convert from `f64`, rounding to the nearest representable value.
    #[inline]
    fn of_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 value representable as scalar")
    }

    /// Convert from `f32`, exact for both scalar widths.
    #[inline]
    fn of_f32(v: f32) -> Self {
        <Self as NumCast>::from(v).expect("f32 value representable as scalar")
    }

    /// Widen to `f64` (exact for `f32` and `f64`).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// Narrow to `f32`, rounding if the scalar is wider.
    #[inline]
    fn as_f32(self) -> f32 {
        self.to_f32().expect("scalar representable as f32")
    }
}

impl Real for f32 {}
impl Real for f64 {}
