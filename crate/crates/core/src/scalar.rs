//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Probability-valued scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Width at which bisection on `[0, 1]` stops.
    fn bisection_tol() -> Self;

    /// Converts an `f64` literal. Panics only on values the type cannot hold.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn bisection_tol() -> f64 {
        1e-10
    }
}

impl Scalar for f32 {
    fn bisection_tol() -> f32 {
        1e-6
    }
}

/// Clamps to `[0, 1]`; NaN maps to 1 (vacuous).
pub fn clamp_unit<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        T::one()
    } else {
        x.max(T::zero()).min(T::one())
    }
}

/// `⌈log2 n⌉` for `n ≥ 1`.
pub fn ceil_log2(n: usize) -> usize {
    assert!(n >= 1, "ceil_log2 of zero");
    (usize::BITS - (n - 1).leading_zeros()) as usize
}
