//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All flows, kernels and quadratures are written against [`Real`] so that they
//! can be instantiated with `f32` or `f64`. The concrete `f64` aliases exported
//! at the crate root are what the CLI and the acceptance suite use.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating point type usable by the flow solvers.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    fn lit(v: f64) -> Self;

    /// Lossy conversion back to `f64`, used for reporting.
    fn as_f64(self) -> f64;

    #[inline]
    fn count(n: usize) -> Self {
        Self::lit(n as f64)
    }

    #[inline]
    fn two() -> Self {
        Self::lit(2.0)
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl Real for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Heaviside step with the convention that zero maps to zero.
///
/// Callers in the double-well flow never evaluate it at exactly zero.
#[inline]
pub fn heaviside<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_round_trip() {
        assert_eq!(<f64 as Real>::lit(0.25).as_f64(), 0.25);
        assert_eq!(<f32 as Real>::lit(0.25).as_f64(), 0.25);
        assert_eq!(<f64 as Real>::count(7), 7.0);
    }

    #[test]
    fn heaviside_step() {
        assert_eq!(heaviside(1e-300_f64), 1.0);
        assert_eq!(heaviside(-1e-300_f64), 0.0);
        assert_eq!(heaviside(0.0_f64), 0.0);
    }
}
