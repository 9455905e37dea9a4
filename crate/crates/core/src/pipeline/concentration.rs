//! Sampling experiment for `X_{I,J} = ⟨b_I(θ), T b_J(θ)⟩` over random sign
//! draws of a faithful system inside a single component `Y_N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{count_up_to, DyadicInterval};
use crate::error::{Error, Result};
use crate::faithful::randomize_faithful_stream;
use crate::linalg::DenseMatrix;

/// Operator on `Y_N` stored as `(row, col, value)` triplets in the Haar
/// coefficient basis, indices in `iota - 1` order.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseComponentOperator {
    depth: u32,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseComponentOperator {
    pub fn new(depth: u32, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        let len = count_up_to(depth);
        if let Some(e) = entries.iter().find(|(r, c, v)| *r >= len || *c >= len || !v.is_finite()) {
            return Err(Error::Dimension(format!("entry {e:?} outside 𝒟_(≤{depth})")));
        }
        Ok(SparseComponentOperator { depth, entries })
    }

    pub fn from_dense(m: &DenseMatrix<f64>) -> Result<Self> {
        let depth = (0..=30u32)
            .find(|&d| count_up_to(d) == m.rows())
            .ok_or_else(|| Error::Dimension(format!("{} rows", m.rows())))?;
        let mut entries = Vec::new();
        for c in 0..m.cols() {
            for (r, v) in m.col(c).iter().enumerate() {
                if *v != 0.0 {
                    entries.push((r, c, *v));
                }
            }
        }
        Self::new(depth, entries)
    }

    /// Multiplier with entries in `[-1, 1]` plus, in every column, a coupling
    /// to the parent and to a random interval of the same generation, each of
    /// size at most `1/4`.
    pub fn random(depth: u32, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for k in DyadicInterval::up_to(depth) {
            let c = k.iota() as usize - 1;
            entries.push((c, c, rng.gen_range(-1.0..=1.0)));
            if let Some(p) = k.parent() {
                entries.push((p.iota() as usize - 1, c, rng.gen_range(-0.25..=0.25)));
            }
            let other = DyadicInterval::new(k.level(), rng.gen_range(0..1u64 << k.level()))?;
            if other != k {
                entries.push((other.iota() as usize - 1, c, rng.gen_range(-0.25..=0.25)));
            }
        }
        Self::new(depth, entries)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Schur test in `L²`: with `T̂_{LK} = T_{LK} (|L|/|K|)^{1/2}` the matrix
    /// in the orthonormal Haar basis, `‖T‖ ≤ (max row sum · max column sum)^{1/2}`
    /// of `|T̂|`.
    pub fn l2_bound(&self) -> f64 {
        let len = count_up_to(self.depth);
        let mut rows = vec![0.0; len];
        let mut cols = vec![0.0; len];
        for &(r, c, v) in &self.entries {
            let lr = level_of(r);
            let lc = level_of(c);
            let w = v.abs() * ((lc as f64 - lr as f64) / 2.0).exp2();
            rows[r] += w;
            cols[c] += w;
        }
        let mr = rows.iter().cloned().fold(0.0, f64::max);
        let mc = cols.iter().cloned().fold(0.0, f64::max);
        (mr * mc).sqrt()
    }
}

fn level_of(pos: usize) -> u32 {
    63 - (pos as u64 + 1).leading_zeros()
}

#[derive(Clone, Debug, Serialize)]
pub struct PairStats {
    /// `iota` of `I` and `J`.
    pub i: u64,
    pub j: u64,
    pub mean: f64,
    pub variance: f64,
    /// `4σ/√draws`.
    pub mean_tolerance: f64,
    pub mean_ok: bool,
    pub variance_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationReport {
    pub n: u32,
    pub m: u32,
    pub big_n: u32,
    pub draws: usize,
    /// Upper bound used for `‖T‖`.
    pub u: f64,
    /// `3 U² 2^{-m/2}`.
    pub variance_bound: f64,
    /// Multiplicative slack applied to `variance_bound`.
    pub slack: f64,
    pub pairs: Vec<PairStats>,
}

impl ConcentrationReport {
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(|p| p.mean_ok && p.variance_ok)
    }

    pub fn max_variance(&self) -> f64 {
        self.pairs.iter().map(|p| p.variance).fold(0.0, f64::max)
    }
}

/// Samples `X_{I,J}`, `I ≠ J ∈ 𝒟_{≤n}`, over `draws` sign draws of the
/// faithful system with frequencies `m..=m+n`, and compares the empirical
/// moments with `E X = 0` and `Var X ≤ 3U²2^{-m/2}`.
pub fn concentration_experiment(
    t: &SparseComponentOperator,
    n: u32,
    m: u32,
    draws: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if m + n > t.depth {
        return Err(Error::Dimension(format!("frequencies {m}..={} exceed Y_{}", m + n, t.depth)));
    }
    if draws < 2 {
        return Err(Error::Parse("at least two draws are needed".into()));
    }
    let side = count_up_to(n);
    let len = count_up_to(t.depth);
    let samples: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|draw| -> Result<Vec<f64>> {
            let sys = randomize_faithful_stream(n, m, seed, draw as u64)?;
            // Block and sign of every K in the component, if any.
            let mut member: Vec<Option<(usize, f64)>> = vec![None; len];
            for (ii, b) in sys.blocks().iter().enumerate() {
                for (k, th) in b.iter() {
                    member[k.iota() as usize - 1] = Some((ii, th as f64));
                }
            }
            let mut x = vec![0.0; side * side];
            for &(r, c, v) in &t.entries {
                if let (Some((bi, tr)), Some((bj, tc))) = (member[r], member[c]) {
                    x[bi * side + bj] += tr * tc * (-(level_of(r) as f64)).exp2() * v;
                }
            }
            Ok(x)
        })
        .collect::<Result<_>>()?;
    let u = t.l2_bound();
    let variance_bound = 3.0 * u * u * (-(m as f64) / 2.0).exp2();
    let slack = 1.1;
    let mut pairs = Vec::new();
    for ii in 0..side {
        for jj in 0..side {
            if ii == jj {
                continue;
            }
            let p = ii * side + jj;
            let vals: Vec<f64> = samples.iter().map(|x| x[p]).collect();
            let mean = vals.iter().sum::<f64>() / draws as f64;
            let variance = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws - 1) as f64;
            let mean_tolerance = 4.0 * variance.sqrt() / (draws as f64).sqrt();
            pairs.push(PairStats {
                i: ii as u64 + 1,
                j: jj as u64 + 1,
                mean,
                variance,
                mean_tolerance,
                mean_ok: mean.abs() <= mean_tolerance,
                variance_ok: variance <= variance_bound * slack,
            });
        }
    }
    Ok(ConcentrationReport { n, m, big_n: t.depth, draws, u, variance_bound, slack, pairs })
}
