//! Seeded test operators.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dyadic::universe;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::norm::{certified_column_bound, SpaceSpec};
use crate::omega::universe_len;
use crate::operator::OmegaOperator;
use crate::scalar::{parse_rational, Rational, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Identity,
    Diagonal,
    Multiplier,
    Random,
    PerturbedIdentity,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::Identity => "identity",
            OperatorKind::Diagonal => "diagonal",
            OperatorKind::Multiplier => "multiplier",
            OperatorKind::Random => "random",
            OperatorKind::PerturbedIdentity => "perturbed-identity",
        })
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => OperatorKind::Identity,
            "diagonal" => OperatorKind::Diagonal,
            "multiplier" => OperatorKind::Multiplier,
            "random" => OperatorKind::Random,
            "perturbed-identity" => OperatorKind::PerturbedIdentity,
            other => return Err(Error::Parse(format!("unknown operator kind {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    /// Values the `diagonal` kind draws from.
    pub values: Vec<Rational>,
    /// Bound on `certified_column_bound` for `random`, and on the
    /// perturbation for `perturbed-identity`.
    pub gamma: f64,
    /// Space in which `gamma` is measured.
    pub space: SpaceSpec,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            values: vec![parse_value("0.6").expect("literal"), parse_value("0.8").expect("literal")],
            gamma: 1.0,
            space: SpaceSpec::lp(2.0, crate::norm::RademacherMode::Constant).expect("p = 2"),
        }
    }
}

/// Parses `"p/q"`, an integer or a decimal such as `"0.6"` exactly.
pub fn parse_value(s: &str) -> Result<Rational> {
    let s = s.trim();
    if s.contains('/') {
        return parse_rational(s);
    }
    let bad = || Error::Parse(format!("malformed number {s:?}"));
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
    let r = Rational::new(digits, BigInt::from(10u32).pow(frac.len() as u32));
    Ok(if neg { -r } else { r })
}

/// A deterministic operator of the given kind on `Y_ω(n_max)`.
pub fn generate_operator<S: Scalar>(kind: OperatorKind, n_max: u32, seed: u64, params: &GenParams) -> Result<OmegaOperator<S>> {
    let len = universe_len(n_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        OperatorKind::Identity => Ok(OmegaOperator::identity(n_max)),
        OperatorKind::Diagonal => {
            if params.values.is_empty() {
                return Err(Error::Parse("the diagonal kind needs at least one value".into()));
            }
            let d: Vec<S> =
                (0..len).map(|_| S::from_rational(&params.values[rng.gen_range(0..params.values.len())])).collect();
            OmegaOperator::diagonal(n_max, &d)
        }
        OperatorKind::Multiplier => {
            // Zeros are inherited by both halves within a component.
            let idx = universe(n_max)?;
            let mut keep = vec![false; len];
            for (p, i) in idx.indices().iter().enumerate() {
                let parent_kept = match i.interval().parent() {
                    Some(q) => keep[idx.position_of(i.component(), q).expect("parent in the universe")],
                    None => true,
                };
                keep[p] = parent_kept && rng.gen_bool(0.75);
            }
            crate::operator::multiplier_zero_one(n_max, &keep)
        }
        OperatorKind::Random | OperatorKind::PerturbedIdentity => {
            if !(params.gamma.is_finite() && params.gamma > 0.0) {
                return Err(Error::Parse(format!("gamma must be positive, got {}", params.gamma)));
            }
            let raw: Vec<f64> = (0..len * len).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let m: OmegaOperator<f64> = OmegaOperator::square(n_max, DenseMatrix::from_fn(len, len, |i, j| raw[j * len + i]))?;
            let bound = certified_column_bound(&m, &params.space);
            let mut scale = params.gamma / bound;
            // Rounding of the scaled entries may push the bound up by an ulp.
            let perturbation = loop {
                let candidate = to_mode::<S>(&m.scale(&scale))?;
                if certified_column_bound(&candidate, &params.space) <= params.gamma {
                    break candidate;
                }
                scale *= 1.0 - 1e-12;
            };
            match kind {
                OperatorKind::Random => Ok(perturbation),
                _ => OmegaOperator::identity(n_max).add(&perturbation),
            }
        }
    }
}

fn to_mode<S: Scalar>(t: &OmegaOperator<f64>) -> Result<OmegaOperator<S>> {
    let m = t.matrix();
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            out.set(i, j, S::from_f64(*m.get(i, j))?);
        }
    }
    OmegaOperator::new(t.domain_n_max(), t.codomain_n_max(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_are_exact() {
        assert_eq!(parse_value("0.6").unwrap(), Rational::new(3.into(), 5.into()));
        assert_eq!(parse_value("-1.25").unwrap(), Rational::new((-5).into(), 4.into()));
        assert_eq!(parse_value("7").unwrap(), Rational::from_integer(7.into()));
        assert!(parse_value("1.2.3").is_err());
        assert!(parse_value(".").is_err());
    }

    #[test]
    fn kinds_and_determinism() {
        let p = GenParams::default();
        let id: OmegaOperator<Rational> = generate_operator(OperatorKind::Identity, 2, 0, &p).unwrap();
        assert_eq!(id.matrix().rows(), 11);
        assert!(id.is_identity());
        let a: OmegaOperator<Rational> = generate_operator(OperatorKind::Diagonal, 3, 7, &p).unwrap();
        let b: OmegaOperator<Rational> = generate_operator(OperatorKind::Diagonal, 3, 7, &p).unwrap();
        assert_eq!(a.digest(), b.digest());
        let r: OmegaOperator<f64> = generate_operator(OperatorKind::Random, 2, 1, &p).unwrap();
        assert!(certified_column_bound(&r, &p.space) <= 1.0);
    }
}
