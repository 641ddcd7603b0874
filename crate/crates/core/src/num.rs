//! Scalar abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable by the geometric and statistical kernels.
pub trait Scalar: Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
