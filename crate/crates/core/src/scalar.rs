//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type usable by the kinematics, dynamics and planning code.
///
/// Implemented for `f32` and `f64`. Transcendental functions come from
/// [`nalgebra::ComplexField`]; conversions go through `num-traits`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Display + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    /// Default central-difference step for first derivatives.
    fn fd_step() -> Self;

    /// Default central-difference step for second derivatives.
    fn fd_step2() -> Self;
}

impl Real for f64 {
    #[inline]
    fn fd_step() -> Self {
        1e-6
    }
    #[inline]
    fn fd_step2() -> Self {
        1e-4
    }
}

impl Real for f32 {
    // cbrt(eps) for central differences in single precision
    #[inline]
    fn fd_step() -> Self {
        5e-3
    }
    #[inline]
    fn fd_step2() -> Self {
        2e-2
    }
}

#[inline]
pub fn deg<T: Real>(x: f64) -> T {
    T::lit(x.to_radians())
}

#[inline]
pub fn to_deg<T: Real>(x: T) -> f64 {
    x.as_f64().to_degrees()
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut w = a % two_pi;
    if w > T::pi() {
        w -= two_pi;
    } else if w <= -T::pi() {
        w += two_pi;
    }
    w
}
