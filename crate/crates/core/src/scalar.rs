use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::Serialize;

/// Floating point scalar the whole crate is generic over: `f32` or `f64`.
///
/// Every quantity here goes through `ln`, `exp` or `sqrt`, so exact or
/// rational scalars have no place in this trait.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
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

/// `true` when `|a - b| <= tol * max(|a|, |b|, floor)`.
pub fn rel_close<T: Scalar>(a: T, b: T, tol: T, floor: T) -> bool {
    if a == b {
        return true;
    }
    let scale = a.abs().max(b.abs()).max(floor);
    (a - b).abs() <= tol * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_two_pi_matches_both_widths() {
        assert!((f64::ln_two_pi() - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert!((f32::ln_two_pi() - (2.0 * std::f32::consts::PI).ln()).abs() < 1e-6);
    }

    #[test]
    fn rel_close_uses_floor() {
        assert!(rel_close(0.0, 1e-13, 1e-12, 1.0));
        assert!(!rel_close(1.0, 1.1, 1e-3, 1.0));
        assert!(rel_close(f64::INFINITY, f64::INFINITY, 1e-12, 1.0));
    }
}
