//! The truncated independent sum: its basis, coefficient vectors, the
//! embeddings `J_n`, conditional expectations and lifted systems.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::dyadic::{count_up_to, DyadicInterval, HaarKey, IndexUniverse, OmegaIndex};
use crate::error::{Error, Result};
use crate::faithful::{faithful_from_frequencies, verify_system, FiniteFaithfulSystem, SupportProfile};
use crate::linalg::DenseMatrix;
use crate::norm::ComponentBlock;
use crate::operator::OmegaOperator;
use crate::scalar::{NumericMode, Scalar};
use crate::step::{HaarCoefficients, StepFunction, HARD_RESOLUTION_CAP};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TauStrategy {
    /// `τ_n = {T_n, …, T_n + n}` with `T_n = n(n+1)/2`.
    Packed,
    Explicit(Vec<Vec<u32>>),
}

/// The functions `h_I^n` realized on a grid: component `n` is the faithful
/// system whose frequencies are `τ_n` in increasing order.
#[derive(Clone, Debug)]
pub struct OmegaBasis {
    n_max: u32,
    tau: Vec<Vec<u32>>,
    m: u32,
    universe: IndexUniverse,
    systems: Vec<FiniteFaithfulSystem>,
}

pub fn packed_tau(n_max: u32) -> Vec<Vec<u32>> {
    (0..=n_max).map(|n| (n * (n + 1) / 2..=n * (n + 1) / 2 + n).collect()).collect()
}

pub fn build_omega_basis(n_max: u32, tau: TauStrategy, m: u32) -> Result<OmegaBasis> {
    let mut tau = match tau {
        TauStrategy::Packed => packed_tau(n_max),
        TauStrategy::Explicit(t) => t,
    };
    if tau.len() != n_max as usize + 1 {
        return Err(Error::InvalidFrequencies(format!("{} frequency sets for n_max {n_max}", tau.len())));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (n, t) in tau.iter_mut().enumerate() {
        t.sort_unstable();
        if t.len() != n + 1 {
            return Err(Error::InvalidFrequencies(format!("τ_{n} has {} elements", t.len())));
        }
        for k in t.iter() {
            if !seen.insert(*k) {
                return Err(Error::InvalidFrequencies(format!("frequency {k} is used twice")));
            }
        }
    }
    if m > HARD_RESOLUTION_CAP {
        return Err(Error::ResolutionCap { requested: m, cap: HARD_RESOLUTION_CAP });
    }
    let systems = tau.iter().map(|t| faithful_from_frequencies(t, m)).collect::<Result<Vec<_>>>()?;
    Ok(OmegaBasis { n_max, tau, m, universe: IndexUniverse::new(n_max)?, systems })
}

impl OmegaBasis {
    /// Packed frequencies on the smallest grid that holds them.
    pub fn packed(n_max: u32) -> Result<Self> {
        let m = n_max * (n_max + 1) / 2 + n_max + 1;
        build_omega_basis(n_max, TauStrategy::Packed, m)
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn tau(&self) -> &[Vec<u32>] {
        &self.tau
    }

    pub fn resolution(&self) -> u32 {
        self.m
    }

    pub fn universe(&self) -> &IndexUniverse {
        &self.universe
    }

    pub fn system(&self, n: u32) -> &FiniteFaithfulSystem {
        &self.systems[n as usize]
    }

    pub fn basis_function<S: Scalar>(&self, idx: OmegaIndex) -> Result<StepFunction<S>> {
        if idx.component() > self.n_max {
            return Err(Error::UniverseMismatch { expected: self.n_max, found: idx.component() });
        }
        self.systems[idx.component() as usize].function(idx.interval(), self.m)
    }

    /// `Σ a_I^n h_I^n` on the grid.
    pub fn synthesize<S: Scalar>(&self, x: &OmegaCoefficients<S>) -> Result<StepFunction<S>> {
        if x.n_max() > self.n_max {
            return Err(Error::UniverseMismatch { expected: self.n_max, found: x.n_max() });
        }
        let mut values = vec![S::zero(); 1usize << self.m];
        for (pos, a) in x.values().iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let f = self.basis_function::<S>(x.universe_index(pos))?;
            for (v, h) in values.iter_mut().zip(f.values()) {
                if !h.is_zero() {
                    *v = v.clone() + a.clone() * h.clone();
                }
            }
        }
        StepFunction::from_values(self.m, values)
    }

    /// The partition generating `𝓗_n = σ(h_I^n : I ∈ 𝒟_{≤n})`.
    pub fn component_partition(&self, n: u32) -> Result<Partition> {
        let fs = DyadicInterval::up_to(n)
            .map(|i| self.systems[n as usize].function::<f64>(i, self.m))
            .collect::<Result<Vec<_>>>()?;
        Partition::generated_by(&fs)
    }

    pub fn to_json(&self) -> Value {
        json!({ "n_max": self.n_max, "tau": self.tau, "M": self.m })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let n_max = v["n_max"].as_u64().ok_or_else(|| Error::Parse("basis without n_max".into()))? as u32;
        let m = v["M"].as_u64().ok_or_else(|| Error::Parse("basis without M".into()))? as u32;
        let tau: Vec<Vec<u32>> = serde_json::from_value(v["tau"].clone())?;
        build_omega_basis(n_max, TauStrategy::Explicit(tau), m)
    }
}

/// A coefficient vector over the universe of components `0..=n_max`, stored
/// densely in the order of the index set.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaCoefficients<S> {
    n_max: u32,
    values: Vec<S>,
}

/// Number of indices in the universe of components `0..=n_max`.
pub fn universe_len(n_max: u32) -> usize {
    IndexUniverse::component_offset(n_max + 1)
}

fn index_at(pos: usize) -> OmegaIndex {
    let mut n = 0;
    while IndexUniverse::component_offset(n + 1) <= pos {
        n += 1;
    }
    let iota = (pos - IndexUniverse::component_offset(n) + 1) as u64;
    OmegaIndex::new(n, DyadicInterval::from_iota(iota).expect("iota in range")).expect("level within component")
}

/// Position of `idx` in the dense layout (independent of `n_max`).
pub fn position_of(idx: OmegaIndex) -> usize {
    IndexUniverse::component_offset(idx.component()) + idx.interval().iota() as usize - 1
}

impl<S: Scalar> OmegaCoefficients<S> {
    pub fn zeros(n_max: u32) -> Self {
        OmegaCoefficients { n_max, values: vec![S::zero(); universe_len(n_max)] }
    }

    pub fn from_vec(n_max: u32, values: Vec<S>) -> Result<Self> {
        if values.len() != universe_len(n_max) {
            return Err(Error::Dimension(format!(
                "{} coefficients for a universe of {}",
                values.len(),
                universe_len(n_max)
            )));
        }
        Ok(OmegaCoefficients { n_max, values })
    }

    /// The basis vector `h_I^n`.
    pub fn unit(n_max: u32, idx: OmegaIndex) -> Result<Self> {
        let mut x = Self::zeros(n_max);
        x.set(idx, S::one())?;
        Ok(x)
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn universe_index(&self, pos: usize) -> OmegaIndex {
        index_at(pos)
    }

    fn slot(&self, idx: OmegaIndex) -> Result<usize> {
        if idx.component() > self.n_max {
            return Err(Error::UniverseMismatch { expected: self.n_max, found: idx.component() });
        }
        Ok(position_of(idx))
    }

    pub fn get(&self, idx: OmegaIndex) -> S {
        self.slot(idx).map(|p| self.values[p].clone()).unwrap_or_else(|_| S::zero())
    }

    pub fn set(&mut self, idx: OmegaIndex, v: S) -> Result<()> {
        let p = self.slot(idx)?;
        self.values[p] = v;
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    /// Nonzero entries in order.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (OmegaIndex, &S)> + '_ {
        self.values.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(p, v)| (index_at(p), v))
    }

    /// Component `n` as Haar coefficients on `𝒟_{≤n}`.
    pub fn component(&self, n: u32) -> HaarCoefficients<S> {
        let start = IndexUniverse::component_offset(n);
        let mut dense = vec![S::zero(); 1usize << (n + 1)];
        if n <= self.n_max {
            dense[1..].clone_from_slice(&self.values[start..start + count_up_to(n)]);
        }
        HaarCoefficients::from_dense(n, false, &dense).expect("dense length matches")
    }

    /// One block per component, for the norm engine.
    pub fn blocks(&self) -> Vec<ComponentBlock> {
        (0..=self.n_max)
            .map(|n| {
                let start = IndexUniverse::component_offset(n);
                let mut coeffs = vec![0.0; 1usize << (n + 1)];
                for (c, v) in coeffs[1..].iter_mut().zip(&self.values[start..start + count_up_to(n)]) {
                    *c = v.to_f64();
                }
                ComponentBlock::new(n, coeffs)
            })
            .collect()
    }

    pub fn to_f64(&self) -> OmegaCoefficients<f64> {
        OmegaCoefficients { n_max: self.n_max, values: self.values.iter().map(Scalar::to_f64).collect() }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> OmegaCoefficients<T> {
        OmegaCoefficients { n_max: self.n_max, values: self.values.iter().map(f).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n_max != other.n_max {
            return Err(Error::UniverseMismatch { expected: self.n_max, found: other.n_max });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a.clone() + b.clone()).collect();
        Ok(OmegaCoefficients { n_max: self.n_max, values })
    }

    pub fn scale(&self, c: &S) -> Self {
        self.map(|v| v.clone() * c.clone())
    }

    /// Keeps the first `k` coefficients in the order of the index set.
    pub fn truncate(&self, k: usize) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut().skip(k) {
            *v = S::zero();
        }
        out
    }

    /// Zeroes every component for which `keep` is false.
    pub fn restrict_components(&self, keep: impl Fn(u32) -> bool) -> Self {
        let mut out = self.clone();
        for n in 0..=self.n_max {
            if !keep(n) {
                let start = IndexUniverse::component_offset(n);
                for v in &mut out.values[start..start + count_up_to(n)] {
                    *v = S::zero();
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let coefficients: Map<String, Value> = self.iter_nonzero().map(|(i, v)| (i.key(), v.to_json())).collect();
        json!({ "n_max": self.n_max, "mode": S::MODE.as_str(), "coefficients": coefficients })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let n_max = v["n_max"].as_u64().ok_or_else(|| Error::Parse("vector without n_max".into()))? as u32;
        if let Some(mode) = v["mode"].as_str() {
            let mode = NumericMode::parse(mode)?;
            if mode != S::MODE {
                return Err(Error::ModeMismatch { expected: S::MODE.as_str(), found: mode.as_str().into() });
            }
        }
        let mut x = Self::zeros(n_max);
        let map = v["coefficients"].as_object().ok_or_else(|| Error::Parse("vector without coefficients".into()))?;
        for (k, val) in map {
            x.set(OmegaIndex::parse_key(k)?, S::from_json(val)?)?;
        }
        Ok(x)
    }
}

/// `J_n`: places a vector of `Y_n` into component `n`.
pub fn embed_jn<S: Scalar>(x: &HaarCoefficients<S>, n: u32, n_max: u32) -> Result<OmegaCoefficients<S>> {
    if x.depth() > n {
        return Err(Error::Dimension(format!("depth {} does not fit component {n}", x.depth())));
    }
    if n > n_max {
        return Err(Error::UniverseMismatch { expected: n_max, found: n });
    }
    let mut out = OmegaCoefficients::zeros(n_max);
    for (k, v) in x.iter() {
        match k {
            HaarKey::Root => return Err(Error::NonzeroMean),
            HaarKey::Dyadic(i) => out.set(OmegaIndex::new(n, *i)?, v.clone())?,
        }
    }
    Ok(out)
}

/// `T_n = J_n^{-1} P_n T J_n` as a matrix on `𝒟_{≤n}` in `iota` order.
pub fn compress_tn<S: Scalar>(t: &OmegaOperator<S>, n: u32) -> Result<DenseMatrix<S>> {
    if n > t.domain_n_max() || n > t.codomain_n_max() {
        return Err(Error::UniverseMismatch { expected: t.domain_n_max().min(t.codomain_n_max()), found: n });
    }
    let start = IndexUniverse::component_offset(n);
    let size = count_up_to(n);
    Ok(DenseMatrix::from_fn(size, size, |i, j| t.matrix().get(start + i, start + j).clone()))
}

/// A finite σ-algebra on the grid of resolution `m`, given by its atoms as
/// sorted lists of cell indices. Atoms are kept sorted by their first cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    m: u32,
    atoms: Vec<Vec<u64>>,
}

impl Partition {
    pub fn new(m: u32, atoms: Vec<Vec<u64>>) -> Result<Self> {
        if m > HARD_RESOLUTION_CAP {
            return Err(Error::ResolutionCap { requested: m, cap: HARD_RESOLUTION_CAP });
        }
        let cells = 1u64 << m;
        let mut seen = vec![false; cells as usize];
        let mut atoms: Vec<Vec<u64>> = atoms.into_iter().filter(|a| !a.is_empty()).collect();
        for a in atoms.iter_mut() {
            a.sort_unstable();
            for &c in a.iter() {
                if c >= cells {
                    return Err(Error::InvalidPartition(format!("cell {c} outside a grid of {cells}")));
                }
                if std::mem::replace(&mut seen[c as usize], true) {
                    return Err(Error::InvalidPartition(format!("cell {c} lies in two atoms")));
                }
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("cell {c} is not covered")));
        }
        atoms.sort_unstable_by_key(|a| a[0]);
        Ok(Partition { m, atoms })
    }

    /// The partition into dyadic intervals of one level.
    pub fn dyadic(level: u32, m: u32) -> Result<Self> {
        if level > m {
            return Err(Error::ResolutionTooSmall { requested: m, required: level });
        }
        let atoms = DyadicInterval::generation(level).map(|i| i.cells(m).map(|r| r.collect())).collect::<Result<Vec<_>>>()?;
        Self::new(m, atoms)
    }

    pub fn trivial(m: u32) -> Result<Self> {
        Self::new(m, vec![(0..1u64 << m).collect()])
    }

    /// The coarsest partition on which every function in `fs` is constant.
    pub fn generated_by<S: Scalar>(fs: &[StepFunction<S>]) -> Result<Self> {
        let m = fs.iter().map(|f| f.resolution()).max().unwrap_or(0);
        let fs = fs.iter().map(|f| f.refine(m)).collect::<Result<Vec<_>>>()?;
        let mut groups: BTreeMap<Vec<u64>, Vec<u64>> = BTreeMap::new();
        for c in 0..1u64 << m {
            let key: Vec<u64> = fs.iter().map(|f| f.values()[c as usize].to_f64().to_bits()).collect();
            groups.entry(key).or_default().push(c);
        }
        Self::new(m, groups.into_values().collect())
    }

    pub fn resolution(&self) -> u32 {
        self.m
    }

    pub fn atoms(&self) -> &[Vec<u64>] {
        &self.atoms
    }

    pub fn refine_to(&self, m: u32) -> Result<Self> {
        if m < self.m {
            return Err(Error::ResolutionTooSmall { requested: m, required: self.m });
        }
        let shift = m - self.m;
        let atoms = self
            .atoms
            .iter()
            .map(|a| a.iter().flat_map(|c| (c << shift)..((c + 1) << shift)).collect())
            .collect();
        Self::new(m, atoms)
    }

    fn labels(&self) -> Vec<usize> {
        let mut label = vec![0usize; 1usize << self.m];
        for (k, a) in self.atoms.iter().enumerate() {
            for &c in a {
                label[c as usize] = k;
            }
        }
        label
    }

    /// The common refinement, i.e. the σ-algebra generated by both.
    pub fn join(&self, other: &Partition) -> Result<Self> {
        let m = self.m.max(other.m);
        let (a, b) = (self.refine_to(m)?.labels(), other.refine_to(m)?.labels());
        let mut groups: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
        for c in 0..a.len() {
            groups.entry((a[c], b[c])).or_default().push(c as u64);
        }
        Self::new(m, groups.into_values().collect())
    }

    /// Every atom of `self` is a union of atoms of `finer`.
    pub fn is_coarser_than(&self, finer: &Partition) -> Result<bool> {
        let m = self.m.max(finer.m);
        let (a, b) = (self.refine_to(m)?.labels(), finer.refine_to(m)?.labels());
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        Ok((0..a.len()).all(|c| *owner.entry(b[c]).or_insert(a[c]) == a[c]))
    }
}

/// Averages `f` over every atom.
pub fn conditional_expectation<S: Scalar>(f: &StepFunction<S>, partition: &Partition) -> Result<StepFunction<S>> {
    let m = f.resolution().max(partition.m);
    let f = f.refine(m)?;
    let p = partition.refine_to(m)?;
    let mut values = vec![S::zero(); 1usize << m];
    for atom in &p.atoms {
        let parts: Vec<S> = atom.iter().map(|c| f.values()[*c as usize].clone()).collect();
        let mean = S::sum_slice(&parts) / S::from_i64(atom.len() as i64);
        for &c in atom {
            values[c as usize] = mean.clone();
        }
    }
    StepFunction::from_values(m, values)
}

/// Both sides of `E^{σ(∪𝓕_n)} x = Σ_n E^{𝓕_n} x`.
#[derive(Clone, Debug, PartialEq)]
pub struct CondExpSum<S> {
    pub joint: StepFunction<S>,
    pub sum: StepFunction<S>,
}

impl<S: Scalar> CondExpSum<S> {
    pub fn agree(&self) -> bool {
        self.joint == self.sum
    }
}

/// Conditional expectation of `x` onto the σ-algebra generated by
/// `subalgebras[0..=m]`, where `𝓕_n ⊆ 𝓗_n`, computed directly and as the sum
/// of the individual conditional expectations.
pub fn component_condexp_sum<S: Scalar>(
    x: &OmegaCoefficients<S>,
    basis: &OmegaBasis,
    subalgebras: &[Partition],
) -> Result<CondExpSum<S>> {
    let f = basis.synthesize(x)?;
    let mut joint = Partition::trivial(basis.resolution())?;
    let mut sum = StepFunction::zero(basis.resolution())?;
    for (n, p) in subalgebras.iter().enumerate() {
        let n = n as u32;
        if n > basis.n_max() || !p.is_coarser_than(&basis.component_partition(n)?)? {
            return Err(Error::Containment { component: n });
        }
        joint = joint.join(p)?;
        sum = sum.add(&conditional_expectation(&f, p)?)?;
    }
    let joint = conditional_expectation(&f, &joint)?;
    let sum = sum.refine(joint.resolution())?;
    Ok(CondExpSum { joint, sum })
}

/// Per-component (almost) faithful systems placed into the independent sum:
/// component `n` of the target is realized inside component `N(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaFaithfulSystem {
    systems: Vec<FiniteFaithfulSystem>,
    n_map: Vec<u32>,
    ambient: u32,
}

pub fn lift_system(systems: Vec<FiniteFaithfulSystem>, n_map: Vec<u32>, ambient_n_max: u32) -> Result<OmegaFaithfulSystem> {
    if systems.is_empty() || systems.len() != n_map.len() {
        return Err(Error::InvalidSystem(format!("{} systems for {} components", systems.len(), n_map.len())));
    }
    if n_map.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSystem(format!("component map {n_map:?} is not strictly increasing")));
    }
    for (n, (s, big)) in systems.iter().zip(&n_map).enumerate() {
        if s.depth() != n as u32 {
            return Err(Error::InvalidSystem(format!("component {n} has depth {}", s.depth())));
        }
        if s.max_level() > *big {
            return Err(Error::InvalidSystem(format!("component {n} reaches level {} beyond N = {big}", s.max_level())));
        }
    }
    if *n_map.last().expect("nonempty") > ambient_n_max {
        return Err(Error::UniverseMismatch { expected: ambient_n_max, found: *n_map.last().expect("nonempty") });
    }
    Ok(OmegaFaithfulSystem { systems, n_map, ambient: ambient_n_max })
}

impl OmegaFaithfulSystem {
    /// `b_I^n = h_I^n` for `n ≤ n_t`.
    pub fn trivial(n_t: u32, ambient_n_max: u32) -> Result<Self> {
        let systems = (0..=n_t)
            .map(|n| faithful_from_frequencies(&(0..=n).collect::<Vec<_>>(), n + 1))
            .collect::<Result<Vec<_>>>()?;
        lift_system(systems, (0..=n_t).collect(), ambient_n_max)
    }

    pub fn target_depth(&self) -> u32 {
        (self.systems.len() - 1) as u32
    }

    pub fn ambient_n_max(&self) -> u32 {
        self.ambient
    }

    pub fn n_map(&self) -> &[u32] {
        &self.n_map
    }

    pub fn system(&self, n: u32) -> &FiniteFaithfulSystem {
        &self.systems[n as usize]
    }

    pub fn systems(&self) -> &[FiniteFaithfulSystem] {
        &self.systems
    }

    /// All component systems are declared and verified faithful.
    pub fn is_faithful(&self) -> bool {
        self.systems.iter().all(|s| s.is_faithful() && verify_system(s).is_faithful())
    }

    pub fn is_almost_faithful(&self) -> bool {
        self.systems.iter().all(|s| verify_system(s).is_almost_faithful())
    }

    pub fn profile(&self, n: u32) -> SupportProfile {
        self.systems[n as usize].support_profile()
    }

    /// `b̃_I^n` as a coefficient vector of the ambient universe.
    pub fn lifted<S: Scalar>(&self, n: u32, i: DyadicInterval) -> Result<OmegaCoefficients<S>> {
        let big = self.n_map[n as usize];
        let mut out = OmegaCoefficients::zeros(self.ambient);
        for (k, t) in self.systems[n as usize].block(i).iter() {
            out.set(OmegaIndex::new(big, k)?, S::from_i64(t as i64))?;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "ambient_n_max": self.ambient,
            "n_map": self.n_map,
            "systems": self.systems.iter().map(FiniteFaithfulSystem::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let ambient = v["ambient_n_max"].as_u64().ok_or_else(|| Error::Parse("system without ambient_n_max".into()))? as u32;
        let n_map: Vec<u32> = serde_json::from_value(v["n_map"].clone())?;
        let systems = v["systems"]
            .as_array()
            .ok_or_else(|| Error::Parse("lifted system without components".into()))?
            .iter()
            .map(FiniteFaithfulSystem::from_json)
            .collect::<Result<Vec<_>>>()?;
        lift_system(systems, n_map, ambient)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use crate::step::rademacher;
    use num_traits::{One, Zero};

    fn iv(level: u32, position: u64) -> DyadicInterval {
        DyadicInterval::new(level, position).unwrap()
    }

    fn idx(n: u32, level: u32, position: u64) -> OmegaIndex {
        OmegaIndex::new(n, iv(level, position)).unwrap()
    }

    #[test]
    fn packed_basis() {
        let b = OmegaBasis::packed(2).unwrap();
        assert_eq!(b.tau(), &[vec![0], vec![1, 2], vec![3, 4, 5]]);
        let h: StepFunction<Rational> = b.basis_function(idx(1, 0, 0)).unwrap();
        assert_eq!(h, rademacher(1, b.resolution()).unwrap());
        let a: StepFunction<Rational> = b.basis_function(idx(0, 0, 0)).unwrap();
        let both = a.values().iter().zip(h.values()).filter(|(x, y)| x.is_one() && y.is_one()).count();
        assert_eq!(Rational::dyadic(both as i64, b.resolution()), Rational::dyadic(1, 2));
    }

    #[test]
    fn positions_roundtrip() {
        for (p, i) in IndexUniverse::new(3).unwrap().indices().iter().enumerate() {
            assert_eq!(position_of(*i), p);
            assert_eq!(index_at(p), *i);
        }
        assert_eq!(universe_len(4), 57);
    }

    #[test]
    fn coefficients_json_roundtrip() {
        let mut x: OmegaCoefficients<Rational> = OmegaCoefficients::zeros(2);
        x.set(idx(2, 1, 1), Rational::dyadic(-3, 2)).unwrap();
        x.set(idx(0, 0, 0), Rational::from_i64(1)).unwrap();
        let v = x.to_json();
        assert!(v["coefficients"].get("2:3").is_some());
        assert_eq!(OmegaCoefficients::from_json(&v).unwrap(), x);
        assert!(OmegaCoefficients::<f64>::from_json(&v).is_err());
    }

    #[test]
    fn conditional_expectation_on_halves() {
        let p = Partition::dyadic(1, 3).unwrap();
        let h0: StepFunction<Rational> = crate::step::haar_function(iv(0, 0), 3).unwrap();
        let h1: StepFunction<Rational> = crate::step::haar_function(iv(1, 0), 3).unwrap();
        assert_eq!(conditional_expectation(&h0, &p).unwrap(), h0);
        assert!(conditional_expectation(&h1, &p).unwrap().values().iter().all(|v| v.is_zero()));
    }

    #[test]
    fn invalid_partitions() {
        assert!(Partition::new(1, vec![vec![0]]).is_err());
        assert!(Partition::new(1, vec![vec![0, 1], vec![1]]).is_err());
        assert!(Partition::new(1, vec![vec![0, 2], vec![1]]).is_err());
    }

    #[test]
    fn high_components_vanish_in_the_sum() {
        let b = OmegaBasis::packed(2).unwrap();
        let x: OmegaCoefficients<Rational> = OmegaCoefficients::unit(2, idx(2, 1, 0)).unwrap();
        let subs = vec![b.component_partition(0).unwrap(), b.component_partition(1).unwrap()];
        let r = component_condexp_sum(&x, &b, &subs).unwrap();
        assert!(r.agree());
        assert!(r.joint.values().iter().all(|v| v.is_zero()));
    }

    #[test]
    fn lifted_bookkeeping() {
        let t = OmegaFaithfulSystem::trivial(2, 3).unwrap();
        for i in DyadicInterval::up_to(2) {
            let b: OmegaCoefficients<Rational> = t.lifted(2, i).unwrap();
            assert_eq!(b, OmegaCoefficients::unit(3, OmegaIndex::new(2, i).unwrap()).unwrap());
        }
        let s = lift_system(vec![faithful_from_frequencies(&[0], 1).unwrap()], vec![1], 2).unwrap();
        let b: OmegaCoefficients<Rational> = s.lifted(0, DyadicInterval::UNIT).unwrap();
        assert_eq!(b.iter_nonzero().map(|(i, _)| i).collect::<Vec<_>>(), vec![idx(1, 0, 0)]);
        assert!(lift_system(vec![faithful_from_frequencies(&[0], 1).unwrap(); 2], vec![1, 1], 2).is_err());
    }
}
