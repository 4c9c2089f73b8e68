//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the estimating-equation machinery is generic over.
///
/// Implemented for `f32` and `f64`. Anything that is a `nalgebra::RealField`
/// and converts to and from primitive numbers qualifies.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Converts an `f64` literal or constant into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the type.
    fn eps() -> Self;

    fn infinity() -> Self;

    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }

    fn infinity() -> Self {
        f64::INFINITY
    }

    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }

    fn infinity() -> Self {
        f32::INFINITY
    }

    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

/// `sign(x)` with `sign(0) = 0`.
#[inline]
pub fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
