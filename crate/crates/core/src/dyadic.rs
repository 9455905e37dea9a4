//! Dyadic intervals, the `iota` enumeration and the order on the index set of
//! the independent sum.

use std::cmp::Ordering;
use std::fmt;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Deepest level a [`DyadicInterval`] may have. Positions and grid offsets at
/// this level still fit in a `u64`.
pub const MAX_LEVEL: u32 = 62;

/// `[position / 2^level, (position + 1) / 2^level)`.
///
/// The derived order is lexicographic in `(level, position)`, which is exactly
/// the order of `iota`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    level: u32,
    position: u64,
}

impl DyadicInterval {
    pub const UNIT: DyadicInterval = DyadicInterval { level: 0, position: 0 };

    pub fn new(level: u32, position: u64) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::LevelOverflow(level));
        }
        if position >> level != 0 {
            return Err(Error::InvalidPosition { level, position });
        }
        Ok(DyadicInterval { level, position })
    }

    pub fn level(self) -> u32 {
        self.level
    }

    pub fn position(self) -> u64 {
        self.position
    }

    /// `2^level + position`.
    pub fn iota(self) -> u64 {
        (1u64 << self.level) + self.position
    }

    pub fn from_iota(iota: u64) -> Result<Self> {
        if iota == 0 {
            return Err(Error::Parse("iota 0 denotes the root, not an interval".into()));
        }
        let level = 63 - iota.leading_zeros();
        DyadicInterval::new(level, iota - (1u64 << level))
    }

    /// `(I⁺, I⁻)`, the left and right halves.
    pub fn halves(self) -> Result<(Self, Self)> {
        if self.level >= MAX_LEVEL {
            return Err(Error::LevelOverflow(self.level + 1));
        }
        let level = self.level + 1;
        let p = self.position << 1;
        Ok((
            DyadicInterval { level, position: p },
            DyadicInterval { level, position: p + 1 },
        ))
    }

    pub fn parent(self) -> Option<Self> {
        (self.level > 0).then(|| DyadicInterval {
            level: self.level - 1,
            position: self.position >> 1,
        })
    }

    /// Ancestor at `level` (the interval itself when the levels agree).
    pub fn ancestor(self, level: u32) -> Option<Self> {
        (level <= self.level).then(|| DyadicInterval {
            level,
            position: self.position >> (self.level - level),
        })
    }

    pub fn contains(self, other: Self) -> bool {
        other.level >= self.level && other.position >> (other.level - self.level) == self.position
    }

    pub fn intersects(self, other: Self) -> bool {
        self.contains(other) || other.contains(self)
    }

    /// `+1` on the left half, `-1` on the right half, `0` outside.
    pub fn haar_sign_on(self, other: Self) -> i8 {
        if other.level <= self.level || !self.contains(other) {
            return 0;
        }
        if (other.position >> (other.level - self.level - 1)) & 1 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn measure<S: Scalar>(self) -> S {
        S::dyadic(1, self.level)
    }

    /// The grid cells `[start, end)` covered at resolution `m`.
    pub fn cells(self, m: u32) -> Result<std::ops::Range<u64>> {
        if m < self.level {
            return Err(Error::ResolutionTooSmall { requested: m, required: self.level });
        }
        if m > MAX_LEVEL {
            return Err(Error::LevelOverflow(m));
        }
        let shift = m - self.level;
        Ok((self.position << shift)..((self.position + 1) << shift))
    }

    /// All intervals of `level` contained in `self`.
    pub fn descendants(self, level: u32) -> impl Iterator<Item = DyadicInterval> {
        let shift = level.saturating_sub(self.level);
        let range = if level < self.level {
            0..0
        } else {
            (self.position << shift)..((self.position + 1) << shift)
        };
        range.map(move |position| DyadicInterval { level, position })
    }

    /// The whole generation `𝒟_level`.
    pub fn generation(level: u32) -> impl Iterator<Item = DyadicInterval> {
        DyadicInterval::UNIT.descendants(level)
    }

    /// `𝒟_{≤depth}` in `iota` order.
    pub fn up_to(depth: u32) -> impl Iterator<Item = DyadicInterval> {
        (0..=depth).flat_map(DyadicInterval::generation)
    }
}

impl fmt::Debug for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}/2^{}, {}/2^{})", self.position, self.level, self.position + 1, self.level)
    }
}

/// Number of intervals in `𝒟_{≤depth}`.
pub fn count_up_to(depth: u32) -> usize {
    (1usize << (depth + 1)) - 1
}

/// An index of the extended Haar system: the constant function (`Root`) or a
/// dyadic interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HaarKey {
    Root,
    Dyadic(DyadicInterval),
}

impl HaarKey {
    pub fn iota(self) -> u64 {
        match self {
            HaarKey::Root => 0,
            HaarKey::Dyadic(i) => i.iota(),
        }
    }

    pub fn from_iota(iota: u64) -> Result<Self> {
        if iota == 0 {
            Ok(HaarKey::Root)
        } else {
            DyadicInterval::from_iota(iota).map(HaarKey::Dyadic)
        }
    }
}

impl From<DyadicInterval> for HaarKey {
    fn from(i: DyadicInterval) -> Self {
        HaarKey::Dyadic(i)
    }
}

/// `(n, I)` with `level(I) ≤ n`.
///
/// The derived order compares the component first and then `iota(I)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OmegaIndex {
    component: u32,
    interval: DyadicInterval,
}

impl OmegaIndex {
    pub fn new(component: u32, interval: DyadicInterval) -> Result<Self> {
        if interval.level() > component {
            return Err(Error::InvalidPosition {
                level: component,
                position: interval.iota(),
            });
        }
        Ok(OmegaIndex { component, interval })
    }

    pub fn component(self) -> u32 {
        self.component
    }

    pub fn interval(self) -> DyadicInterval {
        self.interval
    }

    pub fn to_json(self) -> Value {
        serde_json::json!([self.component, self.interval.iota()])
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let arr = v
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::Parse(format!("expected [n, iota], got {v}")))?;
        let n = arr[0].as_u64().ok_or_else(|| Error::Parse(format!("bad component in {v}")))?;
        let iota = arr[1].as_u64().ok_or_else(|| Error::Parse(format!("bad iota in {v}")))?;
        OmegaIndex::new(n as u32, DyadicInterval::from_iota(iota)?)
    }

    /// The `"n:iota"` key used in JSON maps.
    pub fn key(self) -> String {
        format!("{}:{}", self.component, self.interval.iota())
    }

    pub fn parse_key(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed index key {s:?}"));
        let (n, iota) = s.split_once(':').ok_or_else(bad)?;
        let n: u32 = n.trim().parse().map_err(|_| bad())?;
        let iota: u64 = iota.trim().parse().map_err(|_| bad())?;
        OmegaIndex::new(n, DyadicInterval::from_iota(iota)?)
    }
}

impl fmt::Debug for OmegaIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {:?})", self.component, self.interval)
    }
}

pub fn omega_compare(a: OmegaIndex, b: OmegaIndex) -> Ordering {
    a.cmp(&b)
}

/// All `(n, I)` with `n ≤ n_max`, sorted by the order of the index set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexUniverse {
    n_max: u32,
    indices: Vec<OmegaIndex>,
}

impl IndexUniverse {
    pub fn new(n_max: u32) -> Result<Self> {
        if n_max >= MAX_LEVEL {
            return Err(Error::LevelOverflow(n_max));
        }
        let indices = (0..=n_max)
            .flat_map(|n| {
                DyadicInterval::up_to(n).map(move |interval| OmegaIndex { component: n, interval })
            })
            .collect();
        Ok(IndexUniverse { n_max, indices })
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[OmegaIndex] {
        &self.indices
    }

    pub fn get(&self, pos: usize) -> OmegaIndex {
        self.indices[pos]
    }

    /// Position of the first index of component `n`.
    pub fn component_offset(n: u32) -> usize {
        ((1usize << (n + 1)) - 2) - n as usize
    }

    pub fn component_range(&self, n: u32) -> std::ops::Range<usize> {
        let start = Self::component_offset(n);
        start..start + count_up_to(n)
    }

    pub fn position(&self, idx: OmegaIndex) -> Option<usize> {
        (idx.component <= self.n_max)
            .then(|| Self::component_offset(idx.component) + idx.interval.iota() as usize - 1)
    }

    pub fn position_of(&self, component: u32, interval: DyadicInterval) -> Option<usize> {
        if interval.level() > component {
            return None;
        }
        self.position(OmegaIndex { component, interval })
    }
}

pub fn universe(n_max: u32) -> Result<IndexUniverse> {
    IndexUniverse::new(n_max)
}
