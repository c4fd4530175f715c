//! Scalar abstraction for the tensor engine.
//!
//! All numeric code is generic over [`Scalar`] so the same kernels run in
//! f32 or f64. The concrete aliases at the crate root pin f64, which is what
//! the training harness and the gradient checks use.

use std::fmt;

use num_traits::{Float, NumAssign};

/// Floating-point element type: `f32` or `f64`.
pub trait Scalar:
    Float + NumAssign + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Lossy conversion from f64 (exact for f64 itself).
    fn from_f64(v: f64) -> Self;

    /// Widening conversion to f64.
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> f32 {
        v as f32
    }

    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> f64 {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }
}
