use std::collections::BTreeMap;

use rayon::prelude::*;

use super::sign::{exact_sign_expectation, mc_sign_expectation};
use super::{BaseSpace, ExpectationStrategy, NormMethod, NormResult, RademacherMode, SpaceSpec, MAX_EXACT_CUTOFF};
use crate::error::Result;
use crate::omega::OmegaCoefficients;
use crate::scalar::{pairwise_sum, Scalar};
use crate::step::{HaarCoefficients, StepFunction};

/// Coefficients of one independent component: slot `iota(I)` holds `a_I`,
/// slot 0 the coefficient of the constant function.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentBlock {
    depth: u32,
    coeffs: Vec<f64>,
}

impl ComponentBlock {
    pub fn new(depth: u32, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), 1usize << (depth + 1), "block length must be 2^(depth+1)");
        ComponentBlock { depth, coeffs }
    }

    pub fn from_haar<S: Scalar>(c: &HaarCoefficients<S>) -> Self {
        ComponentBlock::new(c.depth(), c.to_dense().iter().map(Scalar::to_f64).collect())
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|v| *v == 0.0)
    }

    /// Deepest level carrying a nonzero coefficient, if any interval does.
    fn effective_depth(&self) -> Option<u32> {
        (1..self.coeffs.len())
            .rev()
            .find(|&i| self.coeffs[i] != 0.0)
            .map(|i| 63 - (i as u64).leading_zeros())
    }

    /// Values on the cells one level below the effective depth, each with its
    /// weight, merged by value.
    fn value_distribution(&self) -> Vec<(f64, f64)> {
        let root = self.coeffs[0];
        let Some(e) = self.effective_depth() else {
            return vec![(root, 1.0)];
        };
        let mut vals = vec![root];
        for level in 0..=e {
            let base = 1usize << level;
            let mut next = Vec::with_capacity(vals.len() * 2);
            for (p, v) in vals.iter().enumerate() {
                let a = self.coeffs[base + p];
                next.push(v + a);
                next.push(v - a);
            }
            vals = next;
        }
        merge_weighted(vals.into_iter().map(|v| (v, 1.0)).collect(), (-((e + 1) as f64)).exp2())
    }

    /// Multisets of active `|a_I|` along each leaf chain, merged, with weights.
    fn chain_distribution(&self) -> Vec<(Vec<f64>, f64)> {
        let root = self.coeffs[0].abs();
        let e = self.effective_depth().unwrap_or(0);
        let mut groups: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
        let w = (-(e as f64)).exp2();
        for leaf in 0..(1usize << e) {
            let mut chain: Vec<f64> = Vec::with_capacity(e as usize + 2);
            if root != 0.0 {
                chain.push(root);
            }
            for level in 0..=e {
                let a = self.coeffs[(1usize << level) + (leaf >> (e - level))].abs();
                if a != 0.0 {
                    chain.push(a);
                }
            }
            *groups.entry(chain_key(&mut chain)).or_insert(0.0) += w;
        }
        groups.into_iter().map(|(k, w)| (key_chain(&k), w)).collect()
    }
}

fn chain_key(chain: &mut [f64]) -> Vec<u64> {
    chain.sort_by(|a, b| a.partial_cmp(b).expect("finite coefficients"));
    chain.iter().map(|v| v.to_bits()).collect()
}

fn key_chain(k: &[u64]) -> Vec<f64> {
    k.iter().map(|b| f64::from_bits(*b)).collect()
}

fn merge_weighted(mut items: Vec<(f64, f64)>, scale: f64) -> Vec<(f64, f64)> {
    items.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(items.len());
    for (v, w) in items {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += w * scale,
            _ => out.push((v, w * scale)),
        }
    }
    out
}

fn lp_of_weighted(items: &[(f64, f64)], base: BaseSpace) -> f64 {
    match base {
        BaseSpace::LinfClosure => items
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max),
        BaseSpace::Lp(p) => {
            let terms: Vec<f64> = items.iter().map(|(v, w)| w * v.abs().powf(p)).collect();
            pairwise_sum(&terms).powf(1.0 / p)
        }
    }
}

pub fn base_norm<S: Scalar>(f: &StepFunction<S>, spec: &SpaceSpec) -> NormResult {
    let w = (-(f.resolution() as f64)).exp2();
    let items: Vec<(f64, f64)> = f.values().iter().map(|v| (v.to_f64(), w)).collect();
    NormResult::exact(lp_of_weighted(&items, spec.base))
}

/// `‖Σ a_I h_I‖` in the Hardy space of `spec` (a single component).
pub fn hardy_norm<S: Scalar>(
    c: &HaarCoefficients<S>,
    spec: &SpaceSpec,
    strat: &ExpectationStrategy,
) -> Result<NormResult> {
    Ok(norm_of_blocks(&[ComponentBlock::from_haar(c)], spec, strat))
}

pub fn omega_norm<S: Scalar>(
    x: &OmegaCoefficients<S>,
    spec: &SpaceSpec,
    strat: &ExpectationStrategy,
) -> NormResult {
    norm_of_blocks(&x.blocks(), spec, strat)
}

/// Norm of a sum of independent components, evaluated on the product of the
/// components' own grids; this has the same distribution as the sum of the
/// corresponding basis functions on `[0, 1)`.
pub fn norm_of_blocks(blocks: &[ComponentBlock], spec: &SpaceSpec, strat: &ExpectationStrategy) -> NormResult {
    let blocks: Vec<&ComponentBlock> = blocks.iter().filter(|b| !b.is_zero()).collect();
    if blocks.is_empty() {
        return NormResult::exact(0.0);
    }
    match spec.rademacher {
        RademacherMode::Constant => {
            let mut acc = vec![(0.0f64, 1.0f64)];
            for b in &blocks {
                let dist = b.value_distribution();
                let mut next = Vec::with_capacity(acc.len() * dist.len());
                for (v, w) in &acc {
                    for (u, x) in &dist {
                        next.push((v + u, w * x));
                    }
                }
                acc = merge_weighted(next, 1.0);
            }
            NormResult::exact(lp_of_weighted(&acc, spec.base))
        }
        RademacherMode::Independent => independent_norm(&blocks, spec, Eval::Strategy(strat)),
    }
}

/// A guaranteed upper bound for the norm: exact whenever at most
/// [`MAX_EXACT_CUTOFF`] signs are active at a point, otherwise the pointwise
/// bound `E|Σ ε_j c_j| ≤ (Σ c_j²)^{1/2}`.
pub fn norm_upper_bound(blocks: &[ComponentBlock], spec: &SpaceSpec) -> f64 {
    let blocks: Vec<&ComponentBlock> = blocks.iter().filter(|b| !b.is_zero()).collect();
    if blocks.is_empty() {
        return 0.0;
    }
    match spec.rademacher {
        RademacherMode::Constant => norm_of_blocks(&blocks.into_iter().cloned().collect::<Vec<_>>(), spec, &ExpectationStrategy::default()).value,
        RademacherMode::Independent => independent_norm(&blocks, spec, Eval::Upper).value,
    }
}

#[derive(Clone, Copy)]
enum Eval<'a> {
    Strategy(&'a ExpectationStrategy),
    Upper,
}

fn independent_norm(blocks: &[&ComponentBlock], spec: &SpaceSpec, eval: Eval<'_>) -> NormResult {
    let mut acc: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    acc.insert(Vec::new(), 1.0);
    for b in blocks {
        let dist = b.chain_distribution();
        let mut next: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
        for (k, w) in &acc {
            for (chain, x) in &dist {
                let mut joined = key_chain(k);
                joined.extend_from_slice(chain);
                *next.entry(chain_key(&mut joined)).or_insert(0.0) += w * x;
            }
        }
        acc = next;
    }
    let points: Vec<(Vec<f64>, f64)> = acc.into_iter().map(|(k, w)| (key_chain(&k), w)).collect();
    let strat = match eval {
        Eval::Strategy(s) => s,
        Eval::Upper => {
            let items: Vec<(f64, f64)> = points
                .par_iter()
                .map(|(c, w)| {
                    let g = if c.len() <= MAX_EXACT_CUTOFF as usize {
                        exact_sign_expectation(c)
                    } else {
                        c.iter().map(|v| v * v).sum::<f64>().sqrt()
                    };
                    (g, *w)
                })
                .collect();
            return NormResult::exact(lp_of_weighted(&items, spec.base));
        }
    };
    let cutoff = strat.exact_cutoff() as usize;
    let any_mc = points.iter().any(|(c, _)| c.len() > cutoff);
    // (value, variance of the estimate) per point.
    let evals: Vec<(f64, f64)> = points
        .par_iter()
        .enumerate()
        .map(|(i, (c, _))| {
            if c.len() <= cutoff {
                (exact_sign_expectation(c), 0.0)
            } else {
                let (m, v) = mc_sign_expectation(c, strat.mc_samples, strat.seed, i as u64);
                (m, v / strat.mc_samples.max(1) as f64)
            }
        })
        .collect();
    let items: Vec<(f64, f64)> = points.iter().zip(&evals).map(|((_, w), (g, _))| (*g, *w)).collect();
    let value = lp_of_weighted(&items, spec.base);
    let method = if any_mc {
        NormMethod::MonteCarlo { samples: strat.mc_samples, seed: strat.seed }
    } else {
        NormMethod::Exact
    };
    let stat_error = if !any_mc {
        0.0
    } else {
        match spec.base {
            BaseSpace::LinfClosure => items
                .iter()
                .zip(&evals)
                .filter(|((_, w), _)| *w > 0.0)
                .max_by(|a, b| a.0 .0.partial_cmp(&b.0 .0).expect("finite"))
                .map(|(_, (_, v))| v.sqrt())
                .unwrap_or(0.0),
            BaseSpace::Lp(p) => {
                // Delta method for (Σ w g^p)^(1/p).
                let var_terms: Vec<f64> = points
                    .iter()
                    .zip(&evals)
                    .map(|((_, w), (g, v))| (w * p * g.powf(p - 1.0)).powi(2) * v)
                    .collect();
                let sd = pairwise_sum(&var_terms).sqrt();
                if value > 0.0 {
                    value.powf(1.0 - p) / p * sd
                } else {
                    0.0
                }
            }
        }
    };
    NormResult { value, method, stat_error }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::DyadicInterval;
    use crate::norm::RademacherMode::{Constant, Independent};
    use crate::step::{haar_function, haar_synthesize};

    fn iv(level: u32, position: u64) -> DyadicInterval {
        DyadicInterval::new(level, position).unwrap()
    }

    fn spec(p: f64, mode: RademacherMode) -> SpaceSpec {
        SpaceSpec::lp(p, mode).unwrap()
    }

    #[test]
    fn base_norm_examples() {
        let one: StepFunction<f64> = StepFunction::constant(3, 1.0).unwrap();
        for s in [spec(1.0, Constant), spec(3.0, Independent), SpaceSpec::linf(Constant)] {
            assert_eq!(base_norm(&one, &s).value, 1.0);
        }
        let h: StepFunction<f64> = haar_function(iv(1, 0), 2).unwrap();
        assert!((base_norm(&h, &spec(2.0, Constant)).value - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hardy_norm_examples() {
        let c = HaarCoefficients::from_pairs(1, false, [(iv(0, 0).into(), 1.0), (iv(1, 0).into(), 2.0)]).unwrap();
        let strat = ExpectationStrategy::default();
        let ind = hardy_norm(&c, &spec(2.0, Independent), &strat).unwrap();
        assert!((ind.value - 2.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(ind.stat_error, 0.0);
        let con = hardy_norm(&c, &spec(2.0, Constant), &strat).unwrap();
        assert!((con.value - 3f64.sqrt()).abs() < 1e-12);
        let f = haar_synthesize(&c, 2).unwrap();
        assert!((con.value - base_norm(&f, &spec(2.0, Constant)).value).abs() < 1e-12);
    }

    #[test]
    fn single_haar_function_in_every_mode() {
        let c = HaarCoefficients::from_pairs(3, false, [(iv(2, 1).into(), 1.0)]).unwrap();
        let f: StepFunction<f64> = haar_function(iv(2, 1), 4).unwrap();
        for s in [spec(1.0, Constant), spec(2.0, Independent), spec(4.0, Independent), SpaceSpec::linf(Independent)] {
            let h = hardy_norm(&c, &s, &ExpectationStrategy::default()).unwrap().value;
            assert!((h - base_norm(&f, &s).value).abs() < 1e-14, "{s}");
        }
    }

    #[test]
    fn monte_carlo_fallback_reports_error() {
        let coeffs: Vec<f64> = (0..16).map(|i| if i == 0 { 0.0 } else { 1.0 / i as f64 }).collect();
        let block = ComponentBlock::new(3, coeffs);
        let s = spec(1.0, Independent);
        let exact = norm_of_blocks(std::slice::from_ref(&block), &s, &ExpectationStrategy::default());
        let strat = ExpectationStrategy::new(2, 20000, 5).unwrap();
        let mc = norm_of_blocks(&[block], &s, &strat);
        assert!(matches!(mc.method, NormMethod::MonteCarlo { .. }));
        assert!(mc.stat_error > 0.0);
        assert!((mc.value - exact.value).abs() < 5.0 * mc.stat_error);
    }
}
