//! Numeric modes.
//!
//! Every container in this crate is generic over a [`Scalar`], which is either
//! an exact [`Rational`] or an `f64`. A single object never mixes the two;
//! converting between modes is always explicit.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::Value;

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    Rational,
    Float,
}

impl NumericMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NumericMode::Rational => "rational",
            NumericMode::Float => "float",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rational" => Ok(NumericMode::Rational),
            "float" => Ok(NumericMode::Float),
            other => Err(Error::Parse(format!("unknown numeric mode {other:?}"))),
        }
    }
}

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const MODE: NumericMode;

    fn from_i64(v: i64) -> Self;

    /// `k / 2^level`, exact in both modes for the levels used here.
    fn dyadic(k: i64, level: u32) -> Self;

    /// Exact conversion for rationals (every finite float is a dyadic rational).
    fn from_f64(v: f64) -> Result<Self>;

    fn to_f64(&self) -> f64;

    /// Nearest value in this mode (exact for rationals).
    fn from_rational(r: &Rational) -> Self;

    /// Exact rational value; fails only for non-finite floats.
    fn to_rational(&self) -> Result<Rational>;

    fn abs(&self) -> Self;

    /// Larger is a better pivot. Rationals only need a nonzero pivot.
    fn pivot_score(&self) -> f64;

    fn to_json(&self) -> Value;

    fn from_json(v: &Value) -> Result<Self>;

    /// Deterministic sum: pairwise for floats, left fold for rationals.
    fn sum_slice(xs: &[Self]) -> Self;
}

impl Scalar for f64 {
    const MODE: NumericMode = NumericMode::Float;

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn dyadic(k: i64, level: u32) -> Self {
        k as f64 * (-(level as f64)).exp2()
    }

    fn from_f64(v: f64) -> Result<Self> {
        Ok(v)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_rational(r: &Rational) -> Self {
        r.to_f64_lossy()
    }

    fn to_rational(&self) -> Result<Rational> {
        Rational::from_f64(*self)
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn pivot_score(&self) -> f64 {
        f64::abs(*self)
    }

    fn to_json(&self) -> Value {
        serde_json::Number::from_f64(*self)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }

    fn from_json(v: &Value) -> Result<Self> {
        match v {
            Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| Error::Parse(format!("not a float: {n}"))),
            Value::String(s) => Err(Error::ModeMismatch {
                expected: "float",
                found: format!("string {s:?}"),
            }),
            other => Err(Error::Parse(format!("not a float: {other}"))),
        }
    }

    fn sum_slice(xs: &[Self]) -> Self {
        pairwise_sum(xs)
    }
}

impl Scalar for Rational {
    const MODE: NumericMode = NumericMode::Rational;

    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }

    fn dyadic(k: i64, level: u32) -> Self {
        Rational::new(BigInt::from(k), BigInt::one() << level as usize)
    }

    fn from_f64(v: f64) -> Result<Self> {
        Rational::from_float(v).ok_or_else(|| Error::Parse(format!("non-finite value {v}")))
    }

    fn to_f64(&self) -> f64 {
        self.to_f64_lossy()
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn to_rational(&self) -> Result<Rational> {
        Ok(self.clone())
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }

    fn pivot_score(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            1.0
        }
    }

    fn to_json(&self) -> Value {
        Value::String(format_rational(self))
    }

    fn from_json(v: &Value) -> Result<Self> {
        match v {
            Value::String(s) => parse_rational(s),
            Value::Number(n) => Err(Error::ModeMismatch {
                expected: "rational",
                found: format!("number {n}"),
            }),
            other => Err(Error::Parse(format!("not a rational: {other}"))),
        }
    }

    fn sum_slice(xs: &[Self]) -> Self {
        xs.iter().fold(Rational::zero(), |acc, x| acc + x)
    }
}

trait LossyF64 {
    fn to_f64_lossy(&self) -> f64;
}

impl LossyF64 for Rational {
    fn to_f64_lossy(&self) -> f64 {
        if let (Some(n), Some(d)) = (self.numer().to_f64(), self.denom().to_f64()) {
            if n.is_finite() && d.is_finite() && d != 0.0 {
                return n / d;
            }
        }
        // Huge numerator/denominator: shift both down to a representable range.
        let bits = self.numer().bits().max(self.denom().bits());
        let shift = bits.saturating_sub(1000) as usize;
        let n = (self.numer() >> shift).to_f64().unwrap_or(f64::NAN);
        let d = (self.denom() >> shift).to_f64().unwrap_or(f64::NAN);
        n / d
    }
}

/// Formats as `"p/q"`; integers keep the `/1` so the string always parses back
/// through the same grammar.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::Parse(format!("malformed rational {s:?}"));
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s.trim(), "1"),
    };
    let p: BigInt = p.parse().map_err(|_| bad())?;
    let q: BigInt = q.parse().map_err(|_| bad())?;
    if q.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(p, q))
}

/// Pairwise (cascade) summation with a fixed split order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().fold(0.0, |acc, x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn to_rational_vec(xs: &[f64]) -> Result<Vec<Rational>> {
    xs.iter().map(|&x| Rational::from_f64(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_strings_roundtrip() {
        let r = Rational::new(BigInt::from(-6), BigInt::from(8));
        assert_eq!(format_rational(&r), "-3/4");
        assert_eq!(parse_rational("-3/4").unwrap(), r);
        assert_eq!(parse_rational("5").unwrap(), Rational::from_i64(5));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x/2").is_err());
    }

    #[test]
    fn dyadic_values_agree_across_modes() {
        for level in 0..20 {
            for k in [-3i64, 0, 1, 7] {
                let r = Rational::dyadic(k, level);
                assert_eq!(Scalar::to_f64(&r), f64::dyadic(k, level));
            }
        }
    }

    #[test]
    fn json_mode_mismatch_is_an_error() {
        let v = serde_json::json!(0.5);
        assert!(matches!(Rational::from_json(&v), Err(Error::ModeMismatch { .. })));
        let v = serde_json::json!("1/2");
        assert!(matches!(f64::from_json(&v), Err(Error::ModeMismatch { .. })));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_exact_inputs() {
        let xs: Vec<f64> = (0..1000).map(|i| (i % 7) as f64 * 0.25).collect();
        let naive: f64 = xs.iter().sum();
        assert_eq!(pairwise_sum(&xs), naive);
    }
}
