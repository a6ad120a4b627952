//! Floating-point abstraction shared by every numerical kernel.

use std::fmt::{Debug, Display};

/// Real scalar type accepted by the solver (implemented for `f32` and `f64`).
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + rustfft::FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from a count.
    fn from_count(n: usize) -> Self {
        <Self as num_traits::FromPrimitive>::from_usize(n).expect("count representable")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: num_traits::Float
        + num_traits::FloatConst
        + num_traits::FromPrimitive
        + num_traits::NumAssign
        + rustfft::FftNum
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
