//! Floating-point abstraction shared by every numerical module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the analytic solution and the simulator are written against: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Machine epsilon of the concrete type.
    const EPS: Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {
    const EPS: Self = f32::EPSILON;
}

impl Scalar for f64 {
    const EPS: Self = f64::EPSILON;
}

/// `base^exponent` computed as `exp(exponent * ln(base))` for a strictly positive base.
#[inline]
pub(crate) fn pow_pos<T: Scalar>(base: T, exponent: T) -> T {
    debug_assert!(base > T::zero(), "pow_pos requires a positive base, got {base}");
    (exponent * base.ln()).exp()
}
