//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// A real floating-point type the library can compute with (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `ln(2π)`.
    #[inline]
    fn ln_two_pi() -> Self {
        (Self::PI() + Self::PI()).ln()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid `1 / (1 + e^{-x})`.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse<T: Scalar>(y: T) -> T {
    // ln(e^y - 1) = y + ln(1 - e^{-y})
    y + (-(-y).exp()).ln_1p()
}

/// `ln(Σ exp(x_i))` without overflow. Returns `-inf` for an empty slice.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}
