use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational number used for every value, probability and price.
pub type Rational = BigRational;

/// Shorthand for the rational `num / den`.
///
/// Panics when `den == 0`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Field-like number type the game evaluation code is generic over.
///
/// Implemented for [`Rational`] (exact) and `f64` (used inside the
/// iterative solver and for floating certificates).
pub trait Scalar:
    Clone
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// `true` when arithmetic is exact and comparisons need no slack.
    const EXACT: bool;

    fn from_rational(r: &Rational) -> Self;

    fn to_f64(&self) -> f64;

    /// Exact conversion for rationals; identity for `f64`.
    fn to_rational(&self) -> Rational;

    fn abs_val(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn max_val(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Slack for "sums to one" and range checks: zero when exact.
    fn validation_slack() -> f64 {
        if Self::EXACT {
            0.0
        } else {
            1e-9
        }
    }

    fn from_usize(n: usize) -> Self {
        Self::from_rational(&Rational::from_integer(BigInt::from(n)))
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn to_rational(&self) -> Rational {
        self.clone()
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_rational(r: &Rational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn to_rational(&self) -> Rational {
        Rational::from_float(*self).unwrap_or_else(Rational::zero)
    }

    fn abs_val(&self) -> Self {
        num_traits::Float::abs(*self)
    }
}

/// `|a - b| <= slack`, exact equality when `slack == 0` and `S` is exact.
pub(crate) fn close<S: Scalar>(a: &S, b: &S, slack: f64) -> bool {
    if S::EXACT {
        a == b
    } else {
        (a.clone() - b.clone()).abs_val().to_f64() <= slack
    }
}

pub(crate) fn sum<S: Scalar>(xs: &[S]) -> S {
    xs.iter().cloned().fold(S::zero(), |acc, x| acc + x)
}

/// Rounds `x` to a multiple of `2^-bits`; used to snap floating solver output
/// onto short exact rationals.
pub(crate) fn snap_dyadic(x: f64, bits: u32) -> Rational {
    let scale = (1u64 << bits) as f64;
    let n = libm_round(x * scale) as i64;
    Rational::new(BigInt::from(n), BigInt::from(1u64 << bits))
}

fn libm_round(x: f64) -> f64 {
    num_traits::Float::round(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_display_is_lowest_terms() {
        assert_eq!(alloc::format!("{}", rat(6, 8)), "3/4");
        assert_eq!(alloc::format!("{}", rat(-4, 2)), "-2");
    }

    #[test]
    fn float_round_trip_is_exact() {
        let x = 0.1f64;
        let r = x.to_rational();
        assert_eq!(<f64 as Scalar>::from_rational(&r), x);
    }

    #[test]
    fn snapping() {
        assert_eq!(snap_dyadic(0.5000001, 4), rat(1, 2));
        assert_eq!(snap_dyadic(-0.25, 2), rat(-1, 4));
    }
}
