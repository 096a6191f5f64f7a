//! Numeric types a statistic can be evaluated over.
//!
//! Built-in kernels and estimators are written once against [`Scalar`] and run
//! either in `f64` or in exact [`Rational`] arithmetic.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::exec::CompensatedSum;

pub type Rational = BigRational;

pub trait Scalar:
    Clone
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Zero
{
    /// Lifts a float; exact for rationals. Panics on non-finite input in
    /// exact arithmetic.
    fn from_f64(x: f64) -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn from_u128(n: u128) -> Self;
    fn to_f64(&self) -> f64;

    fn sum_of<I: IntoIterator<Item = Self>>(items: I) -> Self {
        items.into_iter().fold(Self::zero(), |acc, x| acc + x)
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).unwrap_or(Ordering::Equal)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }

    fn from_rational(r: &Rational) -> Self {
        rational_to_f64(r)
    }

    fn from_u128(n: u128) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn sum_of<I: IntoIterator<Item = Self>>(items: I) -> Self {
        items.into_iter().collect::<CompensatedSum>().value()
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        f64::total_cmp(self, other)
    }
}

impl Scalar for Rational {
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).unwrap_or_else(|| panic!("cannot lift {x} to a rational"))
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn from_u128(n: u128) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
}

/// Correctly rounded for moderate sizes; falls back to a scaled quotient for
/// numerators or denominators beyond the f64 range.
pub fn rational_to_f64(r: &Rational) -> f64 {
    if let Some(x) = ToPrimitive::to_f64(r) {
        if x.is_finite() {
            return x;
        }
    }
    let (n, d) = (r.numer(), r.denom());
    let shift = n.bits().max(d.bits()).saturating_sub(900);
    let n = n >> shift;
    let d = d >> shift;
    n.to_f64().unwrap_or(f64::NAN) / d.to_f64().unwrap_or(f64::NAN)
}

/// Renders `p/q`, always with an explicit denominator.
pub fn fraction(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `p/q`, an integer, or a terminating decimal such as `0.25`.
pub fn parse_fraction(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let negative = int.starts_with('-');
        let int_part: BigInt = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            int.parse().ok()?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        let frac_part = BigRational::new(frac.parse().ok()?, scale);
        let whole = BigRational::from_integer(int_part.abs()) + frac_part;
        return Some(if negative { -whole } else { whole });
    }
    s.parse::<BigInt>().ok().map(BigRational::from_integer)
}

pub fn rational(p: i64, q: i64) -> Rational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

pub fn is_unit(r: &Rational) -> bool {
    r.is_one()
}
