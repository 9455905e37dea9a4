//! Finite unions of dyadic intervals.
//!
//! Stored as sorted, disjoint, non-adjacent half-open ranges of cells at the
//! finest supported level, so every operation is exact.

use num_bigint::BigInt;
use num_traits::One;

use crate::dyadic::{DyadicInterval, MAX_LEVEL};
use crate::scalar::Rational;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DyadicSet {
    ranges: Vec<(u64, u64)>,
}

fn fine_range(i: DyadicInterval) -> (u64, u64) {
    let shift = MAX_LEVEL - i.level();
    (i.position() << shift, (i.position() + 1) << shift)
}

impl DyadicSet {
    pub fn empty() -> Self {
        DyadicSet::default()
    }

    pub fn unit() -> Self {
        DyadicSet::from_intervals([DyadicInterval::UNIT])
    }

    pub fn from_intervals(intervals: impl IntoIterator<Item = DyadicInterval>) -> Self {
        let mut ranges: Vec<(u64, u64)> = intervals.into_iter().map(fine_range).collect();
        normalize(&mut ranges);
        DyadicSet { ranges }
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn union(&self, other: &DyadicSet) -> DyadicSet {
        let mut ranges = self.ranges.clone();
        ranges.extend_from_slice(&other.ranges);
        normalize(&mut ranges);
        DyadicSet { ranges }
    }

    pub fn intersection(&self, other: &DyadicSet) -> DyadicSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.ranges.len() && j < other.ranges.len() {
            let (a0, a1) = self.ranges[i];
            let (b0, b1) = other.ranges[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if lo < hi {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        normalize(&mut out);
        DyadicSet { ranges: out }
    }

    pub fn difference(&self, other: &DyadicSet) -> DyadicSet {
        let mut out = Vec::new();
        let mut j = 0;
        for &(a0, a1) in &self.ranges {
            let mut start = a0;
            while j < other.ranges.len() && other.ranges[j].1 <= start {
                j += 1;
            }
            let mut k = j;
            while k < other.ranges.len() && other.ranges[k].0 < a1 {
                let (b0, b1) = other.ranges[k];
                if b0 > start {
                    out.push((start, b0));
                }
                start = start.max(b1);
                k += 1;
            }
            if start < a1 {
                out.push((start, a1));
            }
        }
        normalize(&mut out);
        DyadicSet { ranges: out }
    }

    pub fn contains_interval(&self, i: DyadicInterval) -> bool {
        let (a, b) = fine_range(i);
        let k = self.ranges.partition_point(|r| r.1 <= a);
        k < self.ranges.len() && self.ranges[k].0 <= a && b <= self.ranges[k].1
    }

    pub fn is_subset(&self, other: &DyadicSet) -> bool {
        self.difference(other).is_empty()
    }

    pub fn intersects_interval(&self, i: DyadicInterval) -> bool {
        let (a, b) = fine_range(i);
        let k = self.ranges.partition_point(|r| r.1 <= a);
        k < self.ranges.len() && self.ranges[k].0 < b
    }

    pub fn measure(&self) -> Rational {
        let total: BigInt = self.ranges.iter().map(|&(a, b)| BigInt::from(b - a)).sum();
        Rational::new(total, BigInt::one() << MAX_LEVEL as usize)
    }

    /// Decomposes the set into the intervals of `level` it contains, or `None`
    /// if it is not a union of such intervals.
    pub fn cells_at(&self, level: u32) -> Option<Vec<DyadicInterval>> {
        let shift = MAX_LEVEL - level;
        let mask = (1u64 << shift) - 1;
        let mut out = Vec::new();
        for &(a, b) in &self.ranges {
            if a & mask != 0 || b & mask != 0 {
                return None;
            }
            for p in (a >> shift)..(b >> shift) {
                out.push(DyadicInterval::new(level, p).ok()?);
            }
        }
        Some(out)
    }
}

fn normalize(ranges: &mut Vec<(u64, u64)>) {
    ranges.retain(|r| r.0 < r.1);
    ranges.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(ranges.len());
    for &(a, b) in ranges.iter() {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    *ranges = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;

    fn iv(level: u32, position: u64) -> DyadicInterval {
        DyadicInterval::new(level, position).unwrap()
    }

    #[test]
    fn measure_and_containment() {
        let s = DyadicSet::from_intervals([iv(1, 0), iv(2, 2)]);
        assert_eq!(s.measure(), Rational::dyadic(3, 2));
        assert!(s.contains_interval(iv(2, 1)));
        assert!(s.contains_interval(iv(1, 0)));
        assert!(!s.contains_interval(iv(1, 1)));
        assert!(s.intersects_interval(iv(1, 1)));
        assert_eq!(s.cells_at(2).unwrap(), vec![iv(2, 0), iv(2, 1), iv(2, 2)]);
        assert!(s.cells_at(1).is_none());
    }

    #[test]
    fn set_algebra() {
        let a = DyadicSet::from_intervals([iv(1, 0)]);
        let b = DyadicSet::from_intervals([iv(2, 1), iv(2, 2)]);
        assert_eq!(a.intersection(&b), DyadicSet::from_intervals([iv(2, 1)]));
        assert_eq!(a.difference(&b), DyadicSet::from_intervals([iv(2, 0)]));
        assert_eq!(a.union(&b).measure(), Rational::dyadic(3, 2));
        assert!(DyadicSet::unit().difference(&a.union(&DyadicSet::from_intervals([iv(1, 1)]))).is_empty());
    }
}
