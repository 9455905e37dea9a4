//! The sufficient truncation depths N0, N1 and N2, evaluated
//! exactly. They are reported next to the depths the adaptive stages use.

use num_bigint::BigInt;
use num_traits::One;

use crate::error::{Error, Result};
use crate::scalar::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Formulas {
    pub n0: BigInt,
    pub n1: BigInt,
    pub n2: BigInt,
}

fn positive(name: &str, v: f64) -> Result<Rational> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Parse(format!("{name} must be positive, got {v}")));
    }
    Rational::from_float(v).ok_or_else(|| Error::Parse(format!("{name} = {v}")))
}

fn ceil(r: &Rational) -> BigInt {
    r.ceil().to_integer()
}

/// `⌊log₂ r⌋` for `r > 0`.
fn floor_log2(r: &Rational) -> i64 {
    let (p, q) = (r.numer().clone(), r.denom().clone());
    let mut k = p.bits() as i64 - q.bits() as i64;
    // 2^k ≤ p/q < 2^(k+1) holds for k or k - 1.
    let ge = |k: i64| -> bool {
        if k >= 0 {
            p >= &q << k as usize
        } else {
            &p << (-k) as usize >= q
        }
    };
    while !ge(k) {
        k -= 1;
    }
    while ge(k + 1) {
        k += 1;
    }
    k
}

/// `N₀(n, Γ, η) = 21(n+1) + ⌊4 log₂(Γ/η)⌋`.
pub fn n0(n: u64, gamma: f64, eta: f64) -> Result<BigInt> {
    let ratio = positive("Γ", gamma)? / positive("η", eta)?;
    let fourth = ratio.pow(4);
    Ok(BigInt::from(21u64) * BigInt::from(n + 1) + BigInt::from(floor_log2(&fourth)))
}

/// `N₁(n, Γ, η) = n⌈2Γ/η⌉ + 1`.
pub fn n1(n: u64, gamma: f64, eta: f64) -> Result<BigInt> {
    let r = Rational::from_integer(BigInt::from(2)) * positive("Γ", gamma)? / positive("η", eta)?;
    Ok(BigInt::from(n) * ceil(&r) + BigInt::one())
}

/// `N₂(n, η) = 2n⌈n/η + 1⌉2^n`.
pub fn n2(n: u64, eta: f64) -> Result<BigInt> {
    let r = Rational::from_integer(BigInt::from(n)) / positive("η", eta)? + Rational::one();
    Ok(BigInt::from(2 * n) * ceil(&r) * (BigInt::one() << n as usize))
}

impl Formulas {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "N0": self.n0.to_string(),
            "N1": self.n1.to_string(),
            "N2": self.n2.to_string(),
        })
    }
}

pub fn formulas(n: u64, gamma: f64, eta: f64) -> Result<Formulas> {
    Ok(Formulas { n0: n0(n, gamma, eta)?, n1: n1(n, gamma, eta)?, n2: n2(n, eta)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluations() {
        assert_eq!(n0(2, 1.0, 0.5).unwrap(), BigInt::from(67));
        assert_eq!(n1(3, 1.0, 0.25).unwrap(), BigInt::from(25));
        assert_eq!(n2(2, 0.5).unwrap(), BigInt::from(80));
    }

    #[test]
    fn logarithm_edges() {
        assert_eq!(floor_log2(&Rational::from_integer(BigInt::from(16))), 4);
        assert_eq!(floor_log2(&Rational::from_integer(BigInt::from(17))), 4);
        assert_eq!(floor_log2(&Rational::from_integer(BigInt::from(15))), 3);
        assert_eq!(floor_log2(&Rational::new(BigInt::from(1), BigInt::from(3))), -2);
        assert_eq!(floor_log2(&Rational::new(BigInt::from(1), BigInt::from(4))), -2);
        assert_eq!(n0(0, 1.0, 2.0).unwrap(), BigInt::from(21 - 4));
        assert!(n1(1, 0.0, 1.0).is_err());
    }
}
