//! Dyadic step functions on `[0, 1)` and the Haar transform.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::dyadic::{DyadicInterval, HaarKey};
use crate::error::{Error, Result};
use crate::scalar::{NumericMode, Scalar};

/// Resolution limit used by automatic refinement.
pub const DEFAULT_RESOLUTION_CAP: u32 = 16;
/// Absolute limit for any grid, explicit or automatic.
pub const HARD_RESOLUTION_CAP: u32 = 26;

fn check_resolution(m: u32, cap: u32) -> Result<()> {
    if m > cap.min(HARD_RESOLUTION_CAP) {
        Err(Error::ResolutionCap { requested: m, cap: cap.min(HARD_RESOLUTION_CAP) })
    } else {
        Ok(())
    }
}

/// Value `values[k]` on `[k / 2^m, (k + 1) / 2^m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction<S> {
    m: u32,
    values: Vec<S>,
}

impl<S: Scalar> StepFunction<S> {
    pub fn from_values(m: u32, values: Vec<S>) -> Result<Self> {
        check_resolution(m, HARD_RESOLUTION_CAP)?;
        if values.len() != 1usize << m {
            return Err(Error::Dimension(format!(
                "resolution {m} needs {} values, got {}",
                1usize << m,
                values.len()
            )));
        }
        Ok(StepFunction { m, values })
    }

    pub fn zero(m: u32) -> Result<Self> {
        Self::constant(m, S::zero())
    }

    pub fn constant(m: u32, c: S) -> Result<Self> {
        check_resolution(m, HARD_RESOLUTION_CAP)?;
        Ok(StepFunction { m, values: vec![c; 1usize << m] })
    }

    /// `χ_I` at resolution `m`.
    pub fn indicator(i: DyadicInterval, m: u32) -> Result<Self> {
        let mut f = Self::zero(m)?;
        for k in i.cells(m)? {
            f.values[k as usize] = S::one();
        }
        Ok(f)
    }

    pub fn resolution(&self) -> u32 {
        self.m
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn cell_measure(&self) -> S {
        S::dyadic(1, self.m)
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> StepFunction<T> {
        StepFunction { m: self.m, values: self.values.iter().map(f).collect() }
    }

    pub fn to_f64(&self) -> StepFunction<f64> {
        self.map(|v| v.to_f64())
    }

    /// Same function on a finer grid.
    pub fn refine(&self, m: u32) -> Result<Self> {
        if m < self.m {
            return Err(Error::ResolutionTooSmall { requested: m, required: self.m });
        }
        check_resolution(m, HARD_RESOLUTION_CAP)?;
        let rep = 1usize << (m - self.m);
        let mut values = Vec::with_capacity(self.values.len() * rep);
        for v in &self.values {
            values.extend(std::iter::repeat_n(v.clone(), rep));
        }
        Ok(StepFunction { m, values })
    }

    fn binary(&self, other: &Self, op: impl Fn(&S, &S) -> S) -> Result<Self> {
        let m = self.m.max(other.m);
        check_resolution(m, DEFAULT_RESOLUTION_CAP.max(self.m).max(other.m))?;
        let a = if self.m == m { std::borrow::Cow::Borrowed(self) } else { std::borrow::Cow::Owned(self.refine(m)?) };
        let b = if other.m == m { std::borrow::Cow::Borrowed(other) } else { std::borrow::Cow::Owned(other.refine(m)?) };
        let values = a.values.iter().zip(&b.values).map(|(x, y)| op(x, y)).collect();
        Ok(StepFunction { m, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.binary(other, |x, y| x.clone() + y.clone())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.binary(other, |x, y| x.clone() - y.clone())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.binary(other, |x, y| x.clone() * y.clone())
    }

    pub fn scale(&self, c: &S) -> Self {
        self.map(|v| v.clone() * c.clone())
    }

    pub fn integral(&self) -> S {
        S::sum_slice(&self.values) * self.cell_measure()
    }

    /// Sorted `(value, measure)` pairs; the measures sum to one.
    pub fn distribution(&self) -> Vec<(S, S)> {
        let mut vals = self.values.clone();
        vals.sort_by(|a, b| a.partial_cmp(b).expect("step function values must be ordered"));
        let mut out: Vec<(S, i64)> = Vec::new();
        for v in vals {
            match out.last_mut() {
                Some((last, count)) if *last == v => *count += 1,
                _ => out.push((v, 1)),
            }
        }
        out.into_iter().map(|(v, c)| (v, S::dyadic(c, self.m))).collect()
    }

    pub fn support_measure(&self) -> S {
        let count = self.values.iter().filter(|v| !v.is_zero()).count();
        S::dyadic(count as i64, self.m)
    }

    pub fn level_set_measure(&self, alpha: &S) -> S {
        let count = self.values.iter().filter(|v| *v == alpha).count();
        S::dyadic(count as i64, self.m)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "M": self.m,
            "mode": S::MODE.as_str(),
            "values": self.values.iter().map(Scalar::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let m = v["M"].as_u64().ok_or_else(|| Error::Parse("missing M".into()))? as u32;
        let mode = NumericMode::parse(v["mode"].as_str().unwrap_or(""))?;
        if mode != S::MODE {
            return Err(Error::ModeMismatch { expected: S::MODE.as_str(), found: mode.as_str().into() });
        }
        let values = v["values"]
            .as_array()
            .ok_or_else(|| Error::Parse("missing values".into()))?
            .iter()
            .map(S::from_json)
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(m, values)
    }
}

/// `h_I = χ_{I⁺} − χ_{I⁻}` at resolution `m`.
pub fn haar_function<S: Scalar>(i: DyadicInterval, m: u32) -> Result<StepFunction<S>> {
    if i.level() >= m {
        return Err(Error::ResolutionTooSmall { requested: m, required: i.level() + 1 });
    }
    let mut f = StepFunction::zero(m)?;
    let cells = i.cells(m)?;
    let mid = (cells.start + cells.end) / 2;
    for k in cells.start..mid {
        f.values[k as usize] = S::one();
    }
    for k in mid..cells.end {
        f.values[k as usize] = -S::one();
    }
    Ok(f)
}

/// `r_n = Σ_{I ∈ 𝒟_n} h_I`.
pub fn rademacher<S: Scalar>(n: u32, m: u32) -> Result<StepFunction<S>> {
    if n >= m {
        return Err(Error::ResolutionTooSmall { requested: m, required: n + 1 });
    }
    let mut f = StepFunction::zero(m)?;
    let half = 1usize << (m - n - 1);
    for (k, v) in f.values.iter_mut().enumerate() {
        *v = if (k / half).is_multiple_of(2) { S::one() } else { -S::one() };
    }
    Ok(f)
}

/// Haar coefficients `a_I` with `level(I) ≤ depth`, optionally with the
/// coefficient of `χ_[0,1)` under [`HaarKey::Root`].
#[derive(Clone, Debug, PartialEq)]
pub struct HaarCoefficients<S> {
    depth: u32,
    include_root: bool,
    coeffs: BTreeMap<HaarKey, S>,
}

impl<S: Scalar> HaarCoefficients<S> {
    pub fn new(depth: u32, include_root: bool) -> Self {
        HaarCoefficients { depth, include_root, coeffs: BTreeMap::new() }
    }

    pub fn from_pairs(
        depth: u32,
        include_root: bool,
        pairs: impl IntoIterator<Item = (HaarKey, S)>,
    ) -> Result<Self> {
        let mut c = Self::new(depth, include_root);
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn include_root(&self) -> bool {
        self.include_root
    }

    pub fn set(&mut self, key: HaarKey, value: S) -> Result<()> {
        match key {
            HaarKey::Root if !self.include_root => {
                return Err(Error::Unsupported("root coefficient without include_root".into()))
            }
            HaarKey::Dyadic(i) if i.level() > self.depth => {
                return Err(Error::Dimension(format!("{i:?} is deeper than {}", self.depth)))
            }
            _ => {}
        }
        if value.is_zero() {
            self.coeffs.remove(&key);
        } else {
            self.coeffs.insert(key, value);
        }
        Ok(())
    }

    pub fn get(&self, key: HaarKey) -> S {
        self.coeffs.get(&key).cloned().unwrap_or_else(S::zero)
    }

    pub fn get_interval(&self, i: DyadicInterval) -> S {
        self.get(HaarKey::Dyadic(i))
    }

    /// Nonzero coefficients in `iota` order.
    pub fn iter(&self) -> impl Iterator<Item = (&HaarKey, &S)> {
        self.coeffs.iter()
    }

    pub fn haar_support(&self) -> Vec<HaarKey> {
        self.coeffs.keys().copied().collect()
    }

    /// Dense vector indexed by `iota`, length `2^(depth+1)`; slot 0 is the root.
    pub fn to_dense(&self) -> Vec<S> {
        let mut v = vec![S::zero(); 1usize << (self.depth + 1)];
        for (k, a) in &self.coeffs {
            v[k.iota() as usize] = a.clone();
        }
        v
    }

    pub fn from_dense(depth: u32, include_root: bool, dense: &[S]) -> Result<Self> {
        if dense.len() != 1usize << (depth + 1) {
            return Err(Error::Dimension("dense Haar vector has the wrong length".into()));
        }
        let mut c = Self::new(depth, include_root);
        for (iota, a) in dense.iter().enumerate() {
            if !a.is_zero() {
                c.set(HaarKey::from_iota(iota as u64)?, a.clone())?;
            }
        }
        Ok(c)
    }

    pub fn to_f64(&self) -> HaarCoefficients<f64> {
        HaarCoefficients {
            depth: self.depth,
            include_root: self.include_root,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v.to_f64())).collect(),
        }
    }
}

/// Coefficients with `a_I = ⟨h_I, f⟩ / |I|` for every `I` of level `< M`.
pub fn haar_analyze<S: Scalar>(f: &StepFunction<S>, include_root: bool) -> Result<HaarCoefficients<S>> {
    let m = f.m;
    let two = S::from_i64(2);
    let mut out = HaarCoefficients::new(m.saturating_sub(1), include_root);
    let mut avg: Vec<S> = f.values.clone();
    for level in (0..m).rev() {
        let mut next = Vec::with_capacity(avg.len() / 2);
        for (p, pair) in avg.chunks_exact(2).enumerate() {
            let a = (pair[0].clone() - pair[1].clone()) / two.clone();
            if !a.is_zero() {
                let i = DyadicInterval::new(level, p as u64)?;
                out.coeffs.insert(HaarKey::Dyadic(i), a);
            }
            next.push((pair[0].clone() + pair[1].clone()) / two.clone());
        }
        avg = next;
    }
    let mean = avg.pop().unwrap_or_else(S::zero);
    if !mean.is_zero() {
        if !include_root {
            return Err(Error::NonzeroMean);
        }
        out.coeffs.insert(HaarKey::Root, mean);
    }
    Ok(out)
}

pub fn haar_synthesize<S: Scalar>(c: &HaarCoefficients<S>, m: u32) -> Result<StepFunction<S>> {
    check_resolution(m, HARD_RESOLUTION_CAP)?;
    if let Some(deepest) = c.coeffs.keys().filter_map(|k| match k {
        HaarKey::Dyadic(i) => Some(i.level()),
        HaarKey::Root => None,
    }).max() {
        if deepest >= m {
            return Err(Error::ResolutionTooSmall { requested: m, required: deepest + 1 });
        }
    }
    let mut vals = vec![c.get(HaarKey::Root)];
    for level in 0..m {
        let mut next = Vec::with_capacity(vals.len() * 2);
        for (p, v) in vals.iter().enumerate() {
            let key = HaarKey::Dyadic(DyadicInterval::new(level, p as u64)?);
            match c.coeffs.get(&key) {
                Some(a) => {
                    next.push(v.clone() + a.clone());
                    next.push(v.clone() - a.clone());
                }
                None => {
                    next.push(v.clone());
                    next.push(v.clone());
                }
            }
        }
        vals = next;
    }
    StepFunction::from_values(m, vals)
}

/// `∫ f g`, refining to the finer of the two grids.
pub fn pairing<S: Scalar>(f: &StepFunction<S>, g: &StepFunction<S>) -> Result<S> {
    Ok(f.mul(g)?.integral())
}
