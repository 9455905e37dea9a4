//! Finite faithful and almost faithful Haar systems.
//!
//! A system of depth `n` assigns to every `I ∈ 𝒟_{≤n}` a collection `ℬ_I` of
//! dyadic intervals with signs `θ_K`, and `h̃_I = Σ_{K ∈ ℬ_I} θ_K h_K`.

use std::collections::HashMap;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::dyadic::{count_up_to, DyadicInterval, HaarKey};
use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};
use crate::sets::DyadicSet;
use crate::step::{HaarCoefficients, StepFunction, HARD_RESOLUTION_CAP};

/// The collection `ℬ_I` and its signs, sorted by position.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Block {
    intervals: Vec<DyadicInterval>,
    signs: Vec<i8>,
}

impl Block {
    pub fn new(intervals: Vec<DyadicInterval>, signs: Vec<i8>) -> Result<Self> {
        if intervals.len() != signs.len() {
            return Err(Error::InvalidSystem(format!(
                "{} intervals but {} signs",
                intervals.len(),
                signs.len()
            )));
        }
        if let Some(s) = signs.iter().find(|s| **s != 1 && **s != -1) {
            return Err(Error::InvalidSystem(format!("sign {s} is not ±1")));
        }
        let mut pairs: Vec<(DyadicInterval, i8)> = intervals.into_iter().zip(signs).collect();
        pairs.sort_by_key(|(k, _)| (k.position() << (62 - k.level()), k.level()));
        let (intervals, signs) = pairs.into_iter().unzip();
        Ok(Block { intervals, signs })
    }

    pub fn intervals(&self) -> &[DyadicInterval] {
        &self.intervals
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn iter(&self) -> impl Iterator<Item = (DyadicInterval, i8)> + '_ {
        self.intervals.iter().copied().zip(self.signs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// `ℬ_I*`, the union of the collection.
    pub fn support(&self) -> DyadicSet {
        DyadicSet::from_intervals(self.intervals.iter().copied())
    }

    /// `[h̃_I = sign]`.
    pub fn level_set(&self, sign: i8) -> DyadicSet {
        DyadicSet::from_intervals(self.iter().map(|(k, t)| {
            let (l, r) = k.halves().expect("block intervals sit below the level cap");
            if t == sign {
                l
            } else {
                r
            }
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteFaithfulSystem {
    depth: u32,
    frequencies: Option<Vec<u32>>,
    blocks: Vec<Block>,
    faithful: bool,
}

impl FiniteFaithfulSystem {
    /// Assembles a system from blocks in `iota` order. Only the shape is
    /// checked here; [`verify_system`] checks the defining conditions.
    pub fn new(depth: u32, blocks: Vec<Block>, frequencies: Option<Vec<u32>>, faithful: bool) -> Result<Self> {
        if blocks.len() != count_up_to(depth) {
            return Err(Error::InvalidSystem(format!(
                "depth {depth} needs {} blocks, got {}",
                count_up_to(depth),
                blocks.len()
            )));
        }
        if let Some((i, _)) = blocks.iter().enumerate().find(|(_, b)| b.is_empty()) {
            return Err(Error::InvalidSystem(format!("empty collection at iota {}", i + 1)));
        }
        if let Some(k) = &frequencies {
            check_frequencies(k)?;
            if k.len() != depth as usize + 1 {
                return Err(Error::InvalidFrequencies(format!("{} frequencies for depth {depth}", k.len())));
            }
        }
        if let Some(k) = blocks.iter().flat_map(|b| b.intervals.iter()).find(|k| k.level() >= HARD_RESOLUTION_CAP) {
            return Err(Error::ResolutionCap { requested: k.level() + 1, cap: HARD_RESOLUTION_CAP });
        }
        Ok(FiniteFaithfulSystem { depth, frequencies, blocks, faithful })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn frequencies(&self) -> Option<&[u32]> {
        self.frequencies.as_deref()
    }

    /// The strength the constructor claims; [`verify_system`] checks it.
    pub fn is_faithful(&self) -> bool {
        self.faithful
    }

    pub fn block(&self, i: DyadicInterval) -> &Block {
        &self.blocks[i.iota() as usize - 1]
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Deepest level of any interval in any collection.
    pub fn max_level(&self) -> u32 {
        self.blocks
            .iter()
            .flat_map(|b| b.intervals.iter().map(|k| k.level()))
            .max()
            .unwrap_or(0)
    }

    /// `h̃_I` as Haar coefficients on `𝒟_{≤depth}`.
    pub fn haar_coefficients<S: Scalar>(&self, i: DyadicInterval, depth: u32) -> Result<HaarCoefficients<S>> {
        HaarCoefficients::from_pairs(
            depth,
            false,
            self.block(i).iter().map(|(k, t)| (HaarKey::Dyadic(k), S::from_i64(t as i64))),
        )
    }

    /// `h̃_I` on the grid of resolution `m`.
    pub fn function<S: Scalar>(&self, i: DyadicInterval, m: u32) -> Result<StepFunction<S>> {
        let mut values = vec![S::zero(); 1usize << m];
        for (k, t) in self.block(i).iter() {
            if k.level() >= m {
                return Err(Error::ResolutionTooSmall { requested: m, required: k.level() + 1 });
            }
            let cells = k.cells(m)?;
            let mid = (cells.start + cells.end) / 2;
            let (a, b) = if t > 0 { (S::one(), -S::one()) } else { (-S::one(), S::one()) };
            for c in cells.start..mid {
                values[c as usize] = a.clone();
            }
            for c in mid..cells.end {
                values[c as usize] = b.clone();
            }
        }
        StepFunction::from_values(m, values)
    }

    /// `Σ a_I h̃_I` on the grid of resolution `m`; `coeffs` is indexed by `iota - 1`.
    pub fn combination<S: Scalar>(&self, coeffs: &[S], m: u32) -> Result<StepFunction<S>> {
        let mut acc = StepFunction::zero(m)?;
        for (slot, a) in coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let i = DyadicInterval::from_iota(slot as u64 + 1)?;
            acc = acc.add(&self.function::<S>(i, m)?.scale(a))?;
        }
        Ok(acc)
    }

    pub fn support_profile(&self) -> SupportProfile {
        let measures: Vec<Rational> = self.blocks.iter().map(|b| b.support().measure()).collect();
        SupportProfile { mu: measures[0].clone(), measures }
    }

    pub fn to_json(&self) -> Value {
        let mut blocks = Map::new();
        for (slot, b) in self.blocks.iter().enumerate() {
            blocks.insert(
                (slot + 1).to_string(),
                json!({
                    "intervals": b.intervals.iter().map(|k| json!([k.level(), k.position()])).collect::<Vec<_>>(),
                    "signs": b.signs,
                }),
            );
        }
        let mut out = json!({ "depth": self.depth, "faithful": self.faithful, "blocks": blocks });
        if let Some(k) = &self.frequencies {
            out["frequencies"] = json!(k);
        }
        out
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let depth = v["depth"].as_u64().ok_or_else(|| Error::Parse("system without depth".into()))? as u32;
        let faithful = v["faithful"].as_bool().unwrap_or(false);
        let frequencies = match &v["frequencies"] {
            Value::Null => None,
            f => Some(serde_json::from_value::<Vec<u32>>(f.clone())?),
        };
        let map = v["blocks"].as_object().ok_or_else(|| Error::Parse("system without blocks".into()))?;
        let mut blocks = vec![Block::default(); count_up_to(depth)];
        for (key, b) in map {
            let iota: usize = key.parse().map_err(|_| Error::Parse(format!("bad block key {key:?}")))?;
            if iota == 0 || iota > blocks.len() {
                return Err(Error::Parse(format!("block key {iota} outside depth {depth}")));
            }
            let intervals = b["intervals"]
                .as_array()
                .ok_or_else(|| Error::Parse("block without intervals".into()))?
                .iter()
                .map(|p| {
                    let lvl = p[0].as_u64().ok_or_else(|| Error::Parse(format!("bad interval {p}")))?;
                    let pos = p[1].as_u64().ok_or_else(|| Error::Parse(format!("bad interval {p}")))?;
                    DyadicInterval::new(lvl as u32, pos)
                })
                .collect::<Result<Vec<_>>>()?;
            let signs: Vec<i8> = serde_json::from_value(b["signs"].clone())?;
            blocks[iota - 1] = Block::new(intervals, signs)?;
        }
        Self::new(depth, blocks, frequencies, faithful)
    }
}

/// Measures of the supports `B_I = |supp h̃_I|` (indexed by `iota - 1`) and
/// `μ = |ℬ_{[0,1)}*|`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportProfile {
    pub mu: Rational,
    pub measures: Vec<Rational>,
}

impl SupportProfile {
    pub fn measure(&self, i: DyadicInterval) -> &Rational {
        &self.measures[i.iota() as usize - 1]
    }
}

fn check_frequencies(k: &[u32]) -> Result<()> {
    if k.is_empty() {
        return Err(Error::InvalidFrequencies("no frequencies".into()));
    }
    if k.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidFrequencies(format!("{k:?} is not strictly increasing")));
    }
    Ok(())
}

/// Counter-based sign stream: the sign attached to an interval depends only on
/// `(seed, stream, iota)`, so the order of queries never matters.
pub struct SignStream {
    rng: ChaCha8Rng,
    cached: Option<(u64, u64)>,
}

impl SignStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SignStream { rng, cached: None }
    }

    pub fn sign(&mut self, k: DyadicInterval) -> i8 {
        let iota = k.iota();
        let word = iota / 64;
        let bits = match self.cached {
            Some((w, bits)) if w == word => bits,
            _ => {
                self.rng.set_word_pos(word as u128 * 2);
                let bits = self.rng.next_u64();
                self.cached = Some((word, bits));
                bits
            }
        };
        if bits >> (iota % 64) & 1 == 0 {
            1
        } else {
            -1
        }
    }
}

/// The recursion `ℬ_{[0,1)} = 𝒟_{k_0}`,
/// `ℬ_{I^±} = {K ∈ 𝒟_{k_{j+1}} : K ⊂ [h_I = ±1]}` with signs from `theta`.
pub fn faithful_with_signs(k: &[u32], m: u32, mut theta: impl FnMut(DyadicInterval) -> i8) -> Result<FiniteFaithfulSystem> {
    check_frequencies(k)?;
    if m > HARD_RESOLUTION_CAP {
        return Err(Error::ResolutionCap { requested: m, cap: HARD_RESOLUTION_CAP });
    }
    let top = *k.last().expect("checked nonempty");
    if top >= m {
        return Err(Error::ResolutionTooSmall { requested: m, required: top + 1 });
    }
    let depth = (k.len() - 1) as u32;
    let mut blocks = vec![Block::default(); count_up_to(depth)];
    let mut signed = |intervals: Vec<DyadicInterval>| {
        let signs = intervals.iter().map(|i| theta(*i)).collect();
        Block { intervals, signs }
    };
    blocks[0] = signed(DyadicInterval::generation(k[0]).collect());
    for j in 0..depth {
        for i in DyadicInterval::generation(j) {
            let (plus, minus): (Vec<_>, Vec<_>) = {
                let b = &blocks[i.iota() as usize - 1];
                let mut plus = Vec::new();
                let mut minus = Vec::new();
                for (kk, t) in b.iter() {
                    let (l, r) = kk.halves()?;
                    let (p, q) = if t > 0 { (l, r) } else { (r, l) };
                    plus.extend(p.descendants(k[j as usize + 1]));
                    minus.extend(q.descendants(k[j as usize + 1]));
                }
                (plus, minus)
            };
            let (ip, im) = i.halves()?;
            blocks[ip.iota() as usize - 1] = signed(plus);
            blocks[im.iota() as usize - 1] = signed(minus);
        }
    }
    FiniteFaithfulSystem::new(depth, blocks, Some(k.to_vec()), true)
}

/// The faithful system with frequencies `k` and all signs `+1`.
pub fn faithful_from_frequencies(k: &[u32], m: u32) -> Result<FiniteFaithfulSystem> {
    faithful_with_signs(k, m, |_| 1)
}

/// Faithful system with frequencies `m, …, m+n` and signs drawn from the
/// seeded stream.
pub fn randomize_faithful(n: u32, m: u32, seed: u64) -> Result<FiniteFaithfulSystem> {
    randomize_faithful_stream(n, m, seed, 0)
}

pub fn randomize_faithful_stream(n: u32, m: u32, seed: u64, stream: u64) -> Result<FiniteFaithfulSystem> {
    let k: Vec<u32> = (m..=m + n).collect();
    let mut signs = SignStream::new(seed, stream);
    faithful_with_signs(&k, HARD_RESOLUTION_CAP, |i| signs.sign(i))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clause {
    /// Collections overlap internally or share an interval.
    Disjointness,
    /// `ℬ_{I^±}* ⊄ [h̃_I = ±1]`.
    Nesting,
    /// `ℬ_{[0,1)}* ≠ [0, 1)`.
    RootCover,
    /// `ℬ_{I^±}* ≠ [h̃_I = ±1]`.
    LevelSetEquality,
    /// An interval of `ℬ_I` has the wrong level for the declared frequencies.
    Frequencies,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub clause: Clause,
    pub witness: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerificationReport {
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn is_almost_faithful(&self) -> bool {
        self.violations
            .iter()
            .all(|v| matches!(v.clause, Clause::RootCover | Clause::LevelSetEquality))
    }

    pub fn is_faithful(&self) -> bool {
        self.violations.is_empty()
    }

    /// Whether the report supports the strength the system claims.
    pub fn passes(&self, s: &FiniteFaithfulSystem) -> bool {
        if s.is_faithful() {
            self.is_faithful()
        } else {
            self.is_almost_faithful()
        }
    }
}

pub fn verify_system(s: &FiniteFaithfulSystem) -> VerificationReport {
    let mut violations = Vec::new();
    let mut push = |clause, witness: String| violations.push(Violation { clause, witness });

    let mut owner: HashMap<DyadicInterval, DyadicInterval> = HashMap::new();
    for i in DyadicInterval::up_to(s.depth) {
        let b = s.block(i);
        for w in b.intervals.windows(2) {
            if w[0].intersects(w[1]) {
                push(Clause::Disjointness, format!("{:?} and {:?} overlap inside the collection of {i:?}", w[0], w[1]));
            }
        }
        for k in &b.intervals {
            if let Some(other) = owner.insert(*k, i) {
                push(Clause::Disjointness, format!("{k:?} belongs to the collections of {other:?} and {i:?}"));
            }
        }
        if let Some(freq) = &s.frequencies {
            let want = freq[i.level() as usize];
            if let Some(k) = b.intervals.iter().find(|k| k.level() != want) {
                push(Clause::Frequencies, format!("{k:?} in the collection of {i:?} is not at level {want}"));
            }
        }
    }

    if s.blocks[0].support() != DyadicSet::unit() {
        push(Clause::RootCover, format!("the root collection covers measure {}", s.blocks[0].support().measure()));
    }
    for i in DyadicInterval::up_to(s.depth.saturating_sub(1)).filter(|_| s.depth > 0) {
        let (ip, im) = i.halves().expect("depth is small");
        let b = s.block(i);
        for (child, sign) in [(ip, 1i8), (im, -1i8)] {
            let level = b.level_set(sign);
            let sup = s.block(child).support();
            if !sup.is_subset(&level) {
                push(Clause::Nesting, format!("the collection of {child:?} leaves [h_{i:?} = {sign}]"));
            } else if sup != level {
                push(Clause::LevelSetEquality, format!("the collection of {child:?} does not fill [h_{i:?} = {sign}]"));
            }
        }
    }
    VerificationReport { violations }
}

/// A `0-1` Haar multiplier on `Y_depth`; `rho[iota]` is the entry of the
/// interval with that `iota` (slot 0 is unused).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZeroOnePattern {
    depth: u32,
    rho: Vec<bool>,
}

impl ZeroOnePattern {
    pub fn new(depth: u32, rho: Vec<bool>) -> Result<Self> {
        if rho.len() != 1usize << (depth + 1) {
            return Err(Error::Dimension(format!("pattern of length {} for depth {depth}", rho.len())));
        }
        Ok(ZeroOnePattern { depth, rho })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn get(&self, k: DyadicInterval) -> bool {
        k.level() <= self.depth && self.rho[k.iota() as usize]
    }

    /// Ancestor closure: `ρ_K = 0 ⇒ ρ_{K^±} = 0`.
    pub fn check_closed(&self) -> Result<()> {
        for k in DyadicInterval::up_to(self.depth.saturating_sub(1)).filter(|_| self.depth > 0) {
            if !self.get(k) {
                let (l, r) = k.halves()?;
                if self.get(l) || self.get(r) {
                    return Err(Error::ClosureViolation(format!("{k:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn apply<S: Scalar>(&self, c: &HaarCoefficients<S>) -> Result<HaarCoefficients<S>> {
        let pairs: Vec<(HaarKey, S)> = c
            .iter()
            .filter(|(k, _)| match k {
                HaarKey::Dyadic(i) => self.get(*i),
                HaarKey::Root => true,
            })
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        HaarCoefficients::from_pairs(c.depth(), c.include_root(), pairs)
    }
}

/// Extends an almost faithful system living in `Y_N` to a faithful system in
/// `Y_{N+n}` together with a `0-1` multiplier `R` with `R ĥ_I = h̃_I`.
///
/// The gaps `[ĥ_I = ±1] \ ℬ_{I^±}*` are filled with intervals of level
/// `N + level(I) + 1` (level `N` for the root), all with sign `+1`; `R`
/// keeps exactly the intervals of level at most `N` that meet `ℬ_{[0,1)}*`.
pub fn extend_to_faithful(s: &FiniteFaithfulSystem, big_n: u32) -> Result<(FiniteFaithfulSystem, ZeroOnePattern)> {
    let report = verify_system(s);
    if !report.is_almost_faithful() {
        return Err(Error::InvalidSystem(format!(
            "not almost faithful: {}",
            report.violations[0].witness
        )));
    }
    if s.max_level() > big_n {
        return Err(Error::InvalidSystem(format!("system reaches level {} beyond N = {big_n}", s.max_level())));
    }
    let n = s.depth;
    let top = big_n + n;
    if top >= HARD_RESOLUTION_CAP {
        return Err(Error::ResolutionCap { requested: top + 1, cap: HARD_RESOLUTION_CAP });
    }
    let mut blocks: Vec<Block> = vec![Block::default(); count_up_to(n)];
    let fill = |target: &DyadicSet, own: &Block, level: u32| -> Result<Block> {
        let gap = target.difference(&own.support());
        let cells = gap
            .cells_at(level)
            .ok_or_else(|| Error::InvalidSystem(format!("gap is not a union of level-{level} intervals")))?;
        let mut intervals = own.intervals.clone();
        let mut signs = own.signs.clone();
        signs.extend(std::iter::repeat_n(1, cells.len()));
        intervals.extend(cells);
        Block::new(intervals, signs)
    };
    blocks[0] = fill(&DyadicSet::unit(), &s.blocks[0], big_n)?;
    for i in DyadicInterval::up_to(n.saturating_sub(1)).filter(|_| n > 0) {
        let (ip, im) = i.halves()?;
        let level = big_n + i.level() + 1;
        let plus = blocks[i.iota() as usize - 1].level_set(1);
        let minus = blocks[i.iota() as usize - 1].level_set(-1);
        blocks[ip.iota() as usize - 1] = fill(&plus, s.block(ip), level)?;
        blocks[im.iota() as usize - 1] = fill(&minus, s.block(im), level)?;
    }
    let root_support = s.blocks[0].support();
    let mut rho = vec![false; 1usize << (top + 1)];
    for k in DyadicInterval::up_to(big_n) {
        rho[k.iota() as usize] = root_support.intersects_interval(k);
    }
    let extended = FiniteFaithfulSystem::new(n, blocks, None, true)?;
    Ok((extended, ZeroOnePattern::new(top, rho)?))
}
