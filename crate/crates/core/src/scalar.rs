//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Training runs in `f32`; gradient verification and the oracles run in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline(always)]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline(always)]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[inline(always)]
pub(crate) fn lit<T: Real>(v: f64) -> T {
    T::lit(v)
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Inverse of [`sigmoid`]; the argument is clamped into the open unit interval.
#[inline]
pub fn logit<T: Real>(p: T) -> T {
    let eps = lit::<T>(1e-7);
    let p = p.max(eps).min(T::one() - eps);
    (p / (T::one() - p)).ln()
}
