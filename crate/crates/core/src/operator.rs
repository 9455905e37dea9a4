//! Operators on the truncated independent sum as matrices in the basis
//! `(h_I^n)`, and the canonical factor operators of (almost) faithful systems.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::dyadic::{DyadicInterval, OmegaIndex};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::norm::{certified_column_bound, SpaceSpec};
use crate::omega::{position_of, universe_len, OmegaCoefficients, OmegaFaithfulSystem};
use crate::scalar::{NumericMode, Rational, Scalar};

/// Column `(m, J)` holds the coefficients of `T h_J^m`. The domain and the
/// codomain are universes of components `0..=n_max`; they differ for the
/// rectangular factors produced by the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaOperator<S> {
    domain: u32,
    codomain: u32,
    matrix: DenseMatrix<S>,
}

impl<S: Scalar> OmegaOperator<S> {
    pub fn new(domain: u32, codomain: u32, matrix: DenseMatrix<S>) -> Result<Self> {
        if matrix.rows() != universe_len(codomain) || matrix.cols() != universe_len(domain) {
            return Err(Error::Dimension(format!(
                "{}x{} matrix for universes {codomain} <- {domain}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(OmegaOperator { domain, codomain, matrix })
    }

    pub fn square(n_max: u32, matrix: DenseMatrix<S>) -> Result<Self> {
        Self::new(n_max, n_max, matrix)
    }

    pub fn zeros(domain: u32, codomain: u32) -> Self {
        OmegaOperator { domain, codomain, matrix: DenseMatrix::zeros(universe_len(codomain), universe_len(domain)) }
    }

    pub fn identity(n_max: u32) -> Self {
        OmegaOperator { domain: n_max, codomain: n_max, matrix: DenseMatrix::identity(universe_len(n_max)) }
    }

    pub fn scalar(n_max: u32, c: S) -> Self {
        Self::identity(n_max).scale(&c)
    }

    /// The Haar multiplier with entries `d` in the order of the index set.
    pub fn diagonal(n_max: u32, d: &[S]) -> Result<Self> {
        if d.len() != universe_len(n_max) {
            return Err(Error::Dimension(format!("{} diagonal entries for n_max {n_max}", d.len())));
        }
        Ok(OmegaOperator { domain: n_max, codomain: n_max, matrix: DenseMatrix::diagonal(d) })
    }

    pub fn domain_n_max(&self) -> u32 {
        self.domain
    }

    pub fn codomain_n_max(&self) -> u32 {
        self.codomain
    }

    pub fn is_square(&self) -> bool {
        self.domain == self.codomain
    }

    pub fn matrix(&self) -> &DenseMatrix<S> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix<S> {
        self.matrix
    }

    /// Coefficient of `h_I^n` in `T h_J^m`.
    pub fn coefficient(&self, row: OmegaIndex, col: OmegaIndex) -> S {
        if row.component() > self.codomain || col.component() > self.domain {
            return S::zero();
        }
        self.matrix.get(position_of(row), position_of(col)).clone()
    }

    /// `⟨h_I^n, T h_J^m⟩ = |I| · coefficient`.
    pub fn bilinear(&self, row: OmegaIndex, col: OmegaIndex) -> S {
        self.coefficient(row, col) * row.interval().measure::<S>()
    }

    /// `T h_J^m`.
    pub fn column(&self, col: OmegaIndex) -> Result<OmegaCoefficients<S>> {
        if col.component() > self.domain {
            return Err(Error::UniverseMismatch { expected: self.domain, found: col.component() });
        }
        OmegaCoefficients::from_vec(self.codomain, self.matrix.col(position_of(col)).to_vec())
    }

    pub fn apply(&self, x: &OmegaCoefficients<S>) -> Result<OmegaCoefficients<S>> {
        if x.n_max() != self.domain {
            return Err(Error::UniverseMismatch { expected: self.domain, found: x.n_max() });
        }
        OmegaCoefficients::from_vec(self.codomain, self.matrix.mul_vec(x.values())?)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if other.codomain != self.domain {
            return Err(Error::UniverseMismatch { expected: self.domain, found: other.codomain });
        }
        Ok(OmegaOperator { domain: other.domain, codomain: self.codomain, matrix: self.matrix.mul(&other.matrix)? })
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.domain != other.domain || self.codomain != other.codomain {
            return Err(Error::UniverseMismatch { expected: self.domain, found: other.domain });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(OmegaOperator { matrix: self.matrix.add(&other.matrix)?, ..self.clone() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(OmegaOperator { matrix: self.matrix.sub(&other.matrix)?, ..self.clone() })
    }

    pub fn scale(&self, c: &S) -> Self {
        OmegaOperator { domain: self.domain, codomain: self.codomain, matrix: self.matrix.scale(c) }
    }

    pub fn to_f64(&self) -> OmegaOperator<f64> {
        OmegaOperator { domain: self.domain, codomain: self.codomain, matrix: self.matrix.to_f64() }
    }

    /// Exact conversion of every entry to a rational.
    pub fn to_rational(&self) -> Result<OmegaOperator<Rational>> {
        let mut m = DenseMatrix::zeros(self.matrix.rows(), self.matrix.cols());
        for j in 0..self.matrix.cols() {
            for i in 0..self.matrix.rows() {
                let v = self.matrix.get(i, j);
                if !v.is_zero() {
                    m.set(i, j, v.to_rational()?);
                }
            }
        }
        Ok(OmegaOperator { domain: self.domain, codomain: self.codomain, matrix: m })
    }

    /// Restriction and compression to smaller universes: keeps the rows of
    /// components `≤ codomain` and the columns of components `≤ domain`.
    pub fn truncate(&self, domain: u32, codomain: u32) -> Result<Self> {
        if domain > self.domain || codomain > self.codomain {
            return Err(Error::UniverseMismatch { expected: self.domain, found: domain });
        }
        let m = DenseMatrix::from_fn(universe_len(codomain), universe_len(domain), |i, j| self.matrix.get(i, j).clone());
        Self::new(domain, codomain, m)
    }

    pub fn is_identity(&self) -> bool {
        self.is_square() && self.matrix.is_identity()
    }

    /// Entries `d_I^n = ⟨h_I^n, T h_I^n⟩ / |I|`.
    pub fn diagonal_of(&self) -> DiagonalSpec<S> {
        let n = self.domain.min(self.codomain);
        let entries = (0..universe_len(n)).map(|p| self.matrix.get(p, p).clone()).collect();
        DiagonalSpec { n_max: n, entries }
    }

    /// Whether every `|d_I^n| ≥ δ` (or `d_I^n ≥ δ` when `positive`).
    pub fn is_delta_large(&self, delta: f64, positive: bool) -> Result<bool> {
        self.diagonal_of().is_delta_large(delta, positive)
    }

    pub fn to_json(&self) -> Value {
        let mut columns = Map::new();
        for j in 0..self.matrix.cols() {
            let col = self.matrix.col(j);
            let entries: Map<String, Value> = col
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_zero())
                .map(|(i, v)| (index_key(i), v.to_json()))
                .collect();
            if !entries.is_empty() {
                columns.insert(index_key(j), Value::Object(entries));
            }
        }
        let mut out = json!({
            "universe": { "n_max": self.domain },
            "mode": S::MODE.as_str(),
            "columns": columns,
        });
        if self.codomain != self.domain {
            out["codomain"] = json!({ "n_max": self.codomain });
        }
        out
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let domain = v["universe"]["n_max"].as_u64().ok_or_else(|| Error::Parse("operator without universe.n_max".into()))? as u32;
        let codomain = match &v["codomain"] {
            Value::Null => domain,
            c => c["n_max"].as_u64().ok_or_else(|| Error::Parse("bad codomain".into()))? as u32,
        };
        let mode = NumericMode::parse(v["mode"].as_str().unwrap_or(""))?;
        if mode != S::MODE {
            return Err(Error::ModeMismatch { expected: S::MODE.as_str(), found: mode.as_str().into() });
        }
        let mut m = DenseMatrix::zeros(universe_len(codomain), universe_len(domain));
        let columns = v["columns"].as_object().ok_or_else(|| Error::Parse("operator without columns".into()))?;
        for (ck, col) in columns {
            let j = OmegaIndex::parse_key(ck)?;
            if j.component() > domain {
                return Err(Error::UniverseMismatch { expected: domain, found: j.component() });
            }
            let col = col.as_object().ok_or_else(|| Error::Parse(format!("column {ck} is not a map")))?;
            for (rk, val) in col {
                let i = OmegaIndex::parse_key(rk)?;
                if i.component() > codomain {
                    return Err(Error::UniverseMismatch { expected: codomain, found: i.component() });
                }
                m.set(position_of(i), position_of(j), S::from_json(val)?);
            }
        }
        Self::new(domain, codomain, m)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        digest_json(&self.to_json())
    }
}

fn index_key(pos: usize) -> String {
    OmegaCoefficients::<f64>::zeros(0).universe_index(pos).key()
}

/// SHA-256 of the compact serialization; object keys are sorted, so equal
/// values give equal digests.
pub fn digest_json(v: &Value) -> String {
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

/// An operator of either numeric mode, as read from a file.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyOperator {
    Rational(OmegaOperator<Rational>),
    Float(OmegaOperator<f64>),
}

impl AnyOperator {
    pub fn from_json(v: &Value) -> Result<Self> {
        match NumericMode::parse(v["mode"].as_str().unwrap_or(""))? {
            NumericMode::Rational => Ok(AnyOperator::Rational(OmegaOperator::from_json(v)?)),
            NumericMode::Float => Ok(AnyOperator::Float(OmegaOperator::from_json(v)?)),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            AnyOperator::Rational(t) => t.to_json(),
            AnyOperator::Float(t) => t.to_json(),
        }
    }

    pub fn to_f64(&self) -> OmegaOperator<f64> {
        match self {
            AnyOperator::Rational(t) => t.to_f64(),
            AnyOperator::Float(t) => t.clone(),
        }
    }

    pub fn to_rational(&self) -> Result<OmegaOperator<Rational>> {
        match self {
            AnyOperator::Rational(t) => Ok(t.clone()),
            AnyOperator::Float(t) => t.to_rational(),
        }
    }

    pub fn digest(&self) -> String {
        digest_json(&self.to_json())
    }
}

/// The diagonal `(d_I^n)` of an operator in the order of the index set.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalSpec<S> {
    n_max: u32,
    entries: Vec<S>,
}

impl<S: Scalar> DiagonalSpec<S> {
    pub fn new(n_max: u32, entries: Vec<S>) -> Result<Self> {
        if entries.len() != universe_len(n_max) {
            return Err(Error::Dimension(format!("{} entries for n_max {n_max}", entries.len())));
        }
        Ok(DiagonalSpec { n_max, entries })
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn entries(&self) -> &[S] {
        &self.entries
    }

    pub fn get(&self, idx: OmegaIndex) -> S {
        if idx.component() > self.n_max {
            return S::zero();
        }
        self.entries[position_of(idx)].clone()
    }

    /// `diag(T)` as a sorted set of distinct values.
    pub fn values(&self) -> Vec<S> {
        let mut v = self.entries.clone();
        v.sort_by(|a, b| a.partial_cmp(b).expect("ordered entries"));
        v.dedup();
        v
    }

    /// An element of `𝒜(diag T)`: the average of the entries at `indices`,
    /// repetitions allowed.
    pub fn average(&self, indices: &[OmegaIndex]) -> Result<S> {
        if indices.is_empty() {
            return Err(Error::Dimension("average of no entries".into()));
        }
        let parts: Vec<S> = indices.iter().map(|i| self.get(*i)).collect();
        Ok(S::sum_slice(&parts) / S::from_i64(indices.len() as i64))
    }

    /// Average of the entries of component `n` at `level`.
    pub fn level_average(&self, n: u32, level: u32) -> Result<S> {
        if level > n || n > self.n_max {
            return Err(Error::Dimension(format!("level {level} of component {n}")));
        }
        let idx: Vec<OmegaIndex> = DyadicInterval::generation(level).map(|i| OmegaIndex::new(n, i)).collect::<Result<_>>()?;
        self.average(&idx)
    }

    pub fn is_delta_large(&self, delta: f64, positive: bool) -> Result<bool> {
        let d = S::from_f64(delta)?;
        Ok(self.entries.iter().all(|e| if positive { *e >= d } else { e.abs() >= d }))
    }

    pub fn min_abs(&self) -> S {
        self.entries
            .iter()
            .map(Scalar::abs)
            .fold(None, |acc: Option<S>, v| match acc {
                Some(a) if a <= v => Some(a),
                _ => Some(v),
            })
            .unwrap_or_else(S::zero)
    }
}

/// The diagonal `0-1` multiplier of `pattern` (in the order of the index set).
/// Within each component a zero entry must force zeros on both halves.
pub fn multiplier_zero_one<S: Scalar>(n_max: u32, pattern: &[bool]) -> Result<OmegaOperator<S>> {
    if pattern.len() != universe_len(n_max) {
        return Err(Error::Dimension(format!("pattern of length {} for n_max {n_max}", pattern.len())));
    }
    for n in 1..=n_max {
        for i in DyadicInterval::up_to(n - 1) {
            let at = |j: DyadicInterval| pattern[position_of(OmegaIndex::new(n, j).expect("level fits"))];
            let (l, r) = i.halves()?;
            if !at(i) && (at(l) || at(r)) {
                return Err(Error::ClosureViolation(format!("{:?}", OmegaIndex::new(n, i)?)));
            }
        }
    }
    let d: Vec<S> = pattern.iter().map(|b| if *b { S::one() } else { S::zero() }).collect();
    OmegaOperator::diagonal(n_max, &d)
}

/// `Â` and `B̂` of a faithful system. `B̂` maps the target universe (components
/// `0..=n_t`) into the ambient one and `Â` maps back, with
/// `B̂ h_I^n = b_I^n` and `Â x = Σ ⟨b_I^n, x⟩/|I| h_I^n`.
pub fn build_ab_hat<S: Scalar>(sys: &OmegaFaithfulSystem) -> Result<(OmegaOperator<S>, OmegaOperator<S>)> {
    if !sys.is_faithful() {
        return Err(Error::InvalidSystem("the canonical operators need a faithful system".into()));
    }
    build_pair(sys, |_, i| i.measure::<Rational>())
}

/// `A` and `B` of an almost faithful system:
/// `B h_I^n = b̃_I^n` and `A x = Σ ⟨b̃_I^n, x⟩/|B_I^n| h_I^n`. The support
/// hypotheses (`μ_n ≥ 1/2`, `||I|/|B_I^n| − 1/μ_n| ≤ 8^{-1}4^{-n}η`) are
/// checked exactly unless `relaxed` is set.
pub fn build_ab_almost<S: Scalar>(
    sys: &OmegaFaithfulSystem,
    eta: f64,
    relaxed: bool,
) -> Result<(OmegaOperator<S>, OmegaOperator<S>)> {
    if !sys.is_almost_faithful() {
        return Err(Error::InvalidSystem("not an almost faithful system".into()));
    }
    let eta_r = Rational::from_f64(eta)?;
    let half = Rational::dyadic(1, 1);
    for n in 0..=sys.target_depth() {
        let prof = sys.profile(n);
        let root = OmegaIndex::new(n, DyadicInterval::UNIT)?;
        if prof.mu < half {
            return Err(Error::Hypothesis { index: format!("{root:?}"), reason: format!("μ = {} < 1/2", prof.mu) });
        }
        let tol = eta_r.clone() * Rational::dyadic(1, 3 + 2 * n);
        let inv_mu = Rational::from_i64(1) / prof.mu.clone();
        for i in DyadicInterval::up_to(n) {
            let dev = i.measure::<Rational>() / prof.measure(i).clone() - inv_mu.clone();
            let dev = Scalar::abs(&dev);
            let bad = if relaxed { dev.to_f64() > tol.to_f64() * (1.0 + 1e-12) } else { dev > tol };
            if bad {
                return Err(Error::Hypothesis {
                    index: format!("{:?}", OmegaIndex::new(n, i)?),
                    reason: format!("||I|/|B_I| - 1/μ| = {} exceeds {}", dev.to_f64(), tol.to_f64()),
                });
            }
        }
    }
    build_pair(sys, |n, i| sys.profile(n).measure(i).clone())
}

/// Shared assembly; `norm(n, I)` is the denominator used by the left factor.
fn build_pair<S: Scalar>(
    sys: &OmegaFaithfulSystem,
    norm: impl Fn(u32, DyadicInterval) -> Rational,
) -> Result<(OmegaOperator<S>, OmegaOperator<S>)> {
    let target = sys.target_depth();
    let ambient = sys.ambient_n_max();
    let mut a = DenseMatrix::zeros(universe_len(target), universe_len(ambient));
    let mut b = DenseMatrix::zeros(universe_len(ambient), universe_len(target));
    for n in 0..=target {
        let big = sys.n_map()[n as usize];
        for i in DyadicInterval::up_to(n) {
            let row = position_of(OmegaIndex::new(n, i)?);
            let denom = norm(n, i);
            for (k, t) in sys.system(n).block(i).iter() {
                let col = position_of(OmegaIndex::new(big, k)?);
                let sign = Rational::from_i64(t as i64);
                b.set(col, row, S::from_rational(&sign));
                a.set(row, col, S::from_rational(&(sign * k.measure::<Rational>() / denom.clone())));
            }
        }
    }
    Ok((OmegaOperator::new(ambient, target, a)?, OmegaOperator::new(target, ambient, b)?))
}

/// `A · T · B`.
pub fn conjugate<S: Scalar>(a: &OmegaOperator<S>, t: &OmegaOperator<S>, b: &OmegaOperator<S>) -> Result<OmegaOperator<S>> {
    a.compose(&t.compose(b)?)
}

/// Certified upper bound for `‖S − target‖`.
pub fn residual<S: Scalar>(s: &OmegaOperator<S>, target: &OmegaOperator<S>, spec: &SpaceSpec) -> Result<f64> {
    Ok(certified_column_bound(&s.sub(target)?, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faithful::{faithful_from_frequencies, randomize_faithful};
    use crate::omega::lift_system;

    fn idx(n: u32, level: u32, position: u64) -> OmegaIndex {
        OmegaIndex::new(n, DyadicInterval::new(level, position).unwrap()).unwrap()
    }

    fn r(p: i64, q: u32) -> Rational {
        Rational::dyadic(p, q)
    }

    #[test]
    fn identity_and_diagonal_application() {
        let x = OmegaCoefficients::from_vec(1, vec![r(1, 0), r(-3, 1), r(5, 2), r(0, 0)]).unwrap();
        assert_eq!(OmegaOperator::identity(1).apply(&x).unwrap(), x);
        let d = OmegaOperator::diagonal(1, &[r(1, 0), r(2, 0), r(3, 0), r(4, 0)]).unwrap();
        let h: OmegaCoefficients<Rational> = OmegaCoefficients::unit(1, idx(1, 1, 0)).unwrap();
        assert_eq!(d.apply(&h).unwrap(), h.scale(&r(3, 0)));
        assert_eq!(d.bilinear(idx(1, 1, 0), idx(1, 1, 0)), r(3, 1));
    }

    #[test]
    fn json_roundtrip_and_digest() {
        let d = OmegaOperator::diagonal(1, &[r(1, 0), r(-1, 1), r(3, 2), r(0, 0)]).unwrap();
        let v = d.to_json();
        assert_eq!(OmegaOperator::<Rational>::from_json(&v).unwrap(), d);
        assert!(OmegaOperator::<f64>::from_json(&v).is_err());
        assert_eq!(d.digest(), OmegaOperator::<Rational>::from_json(&v).unwrap().digest());
        assert_ne!(d.digest(), d.scale(&r(2, 0)).digest());
        let rect: OmegaOperator<f64> = OmegaOperator::zeros(0, 2);
        assert_eq!(OmegaOperator::<f64>::from_json(&rect.to_json()).unwrap(), rect);
    }

    #[test]
    fn delta_large_predicates() {
        let d = OmegaOperator::diagonal(1, &[0.6, -0.9, 0.6, -0.9]).unwrap();
        assert!(d.is_delta_large(0.6, false).unwrap());
        assert!(!d.is_delta_large(0.6, true).unwrap());
        assert!(OmegaOperator::<f64>::identity(2).is_delta_large(1.0, true).unwrap());
    }

    #[test]
    fn zero_one_multipliers() {
        // Component 1 holds (1,[0,1)), (1,[0,1/2)), (1,[1/2,1)).
        let ok = multiplier_zero_one::<Rational>(1, &[true, true, false, true]).unwrap();
        assert_eq!(ok.diagonal_of().entries(), &[r(1, 0), r(1, 0), r(0, 0), r(1, 0)]);
        assert!(multiplier_zero_one::<Rational>(1, &[true, false, true, false]).is_err());
        assert!(multiplier_zero_one::<Rational>(2, &[true; 11]).unwrap().is_identity());
    }

    #[test]
    fn ab_hat_of_the_trivial_system() {
        let sys = OmegaFaithfulSystem::trivial(2, 2).unwrap();
        let (a, b) = build_ab_hat::<Rational>(&sys).unwrap();
        assert!(a.is_identity() && b.is_identity());
    }

    #[test]
    fn ab_hat_depth_zero_in_component_one() {
        let sys = lift_system(vec![faithful_from_frequencies(&[0], 1).unwrap()], vec![1], 1).unwrap();
        let (a, b) = build_ab_hat::<Rational>(&sys).unwrap();
        assert_eq!((a.domain_n_max(), a.codomain_n_max()), (1, 0));
        assert!(a.compose(&b).unwrap().is_identity());
    }

    #[test]
    fn ab_hat_is_a_left_inverse_for_random_systems() {
        let systems = vec![randomize_faithful(0, 1, 3).unwrap(), randomize_faithful(1, 1, 4).unwrap()];
        let sys = lift_system(systems, vec![1, 3], 3).unwrap();
        let (a, b) = build_ab_hat::<Rational>(&sys).unwrap();
        assert!(a.compose(&b).unwrap().is_identity());
        let p = b.compose(&a).unwrap();
        assert_eq!(p.compose(&p).unwrap(), p);
    }
}
