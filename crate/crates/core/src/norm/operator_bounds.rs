use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::engine::{norm_of_blocks, norm_upper_bound};
use super::{BaseSpace, ExpectationStrategy, SpaceSpec};
use crate::dyadic::OmegaIndex;
use crate::omega::OmegaCoefficients;
use crate::operator::OmegaOperator;
use crate::scalar::{pairwise_sum, Scalar};

/// `‖h_J^m‖_Y`, which only depends on `|J|`.
pub fn haar_norm(idx: OmegaIndex, spec: &SpaceSpec) -> f64 {
    match spec.base {
        BaseSpace::Lp(p) => (-(idx.interval().level() as f64) / p).exp2(),
        BaseSpace::LinfClosure => 1.0,
    }
}

/// `2 Σ_{(m,J)} ‖S h_J^m‖_Y / ‖h_J^m‖_Y`.
///
/// Every coefficient satisfies `|a_J^m| ‖h_J^m‖ ≤ 2‖x‖` because the basis is
/// monotone, so this bounds `‖S‖` from above. Column norms are evaluated
/// exactly or, past the enumeration limit, by a pointwise upper bound.
pub fn certified_column_bound<S: Scalar>(s: &OmegaOperator<S>, spec: &SpaceSpec) -> f64 {
    let cols = s.matrix().cols();
    let terms: Vec<f64> = (0..cols)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = s.matrix().col(j).iter().map(Scalar::to_f64).collect();
            if col.iter().all(|v| *v == 0.0) {
                return 0.0;
            }
            let x = OmegaCoefficients::from_vec(s.codomain_n_max(), col).expect("column length matches");
            norm_upper_bound(&x.blocks(), spec) / haar_norm(x.universe_index(j), spec)
        })
        .collect();
    2.0 * pairwise_sum(&terms)
}

/// Parameters of the sampled lower estimate of an operator norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormSampler {
    pub seed: u64,
    pub trials: usize,
    pub ascent_rounds: usize,
    pub strategy: ExpectationStrategy,
}

impl NormSampler {
    pub fn new(seed: u64, trials: usize) -> Self {
        NormSampler { seed, trials, ascent_rounds: 2, strategy: ExpectationStrategy::default() }
    }
}

impl Default for NormSampler {
    fn default() -> Self {
        NormSampler::new(0, 32)
    }
}

/// `‖Tx‖ / ‖x‖` (zero for `x = 0`).
pub fn norm_ratio(t: &OmegaOperator<f64>, x: &OmegaCoefficients<f64>, spec: &SpaceSpec, strat: &ExpectationStrategy) -> f64 {
    let nx = norm_of_blocks(&x.blocks(), spec, strat).value;
    if nx == 0.0 {
        return 0.0;
    }
    let tx = t.apply(x).expect("vector lives in the domain");
    norm_of_blocks(&tx.blocks(), spec, strat).value / nx
}

/// Largest `‖Tx‖/‖x‖` over the basis vectors, seeded random vectors and a
/// coordinate ascent started at the best of them.
pub fn operator_norm_lower<S: Scalar>(t: &OmegaOperator<S>, spec: &SpaceSpec, sampler: &NormSampler) -> f64 {
    let t = t.to_f64();
    let n_max = t.domain_n_max();
    let dim = t.matrix().cols();
    let ratio = |x: &OmegaCoefficients<f64>| norm_ratio(&t, x, spec, &sampler.strategy);
    let unit = |j: usize| {
        let mut v = vec![0.0; dim];
        v[j] = 1.0;
        OmegaCoefficients::from_vec(n_max, v).expect("dimension matches")
    };
    let mut candidates: Vec<OmegaCoefficients<f64>> = (0..dim).map(unit).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    for _ in 0..sampler.trials {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        candidates.push(OmegaCoefficients::from_vec(n_max, v).expect("dimension matches"));
    }
    let scores: Vec<f64> = candidates.par_iter().map(ratio).collect();
    let (mut best_i, mut best) = (0, 0.0);
    for (i, s) in scores.iter().enumerate() {
        if *s > best {
            best = *s;
            best_i = i;
        }
    }
    if dim == 0 || best == 0.0 {
        return best;
    }
    let mut x = candidates.swap_remove(best_i).into_values();
    let mut step = x.iter().fold(0.0f64, |m, v| m.max(v.abs())) * 0.5;
    for _ in 0..sampler.ascent_rounds {
        for j in 0..dim {
            let trials: Vec<Vec<f64>> = [step, -step]
                .iter()
                .map(|d| {
                    let mut y = x.clone();
                    y[j] += d;
                    y
                })
                .collect();
            let scored: Vec<f64> = trials
                .par_iter()
                .map(|y| ratio(&OmegaCoefficients::from_vec(n_max, y.clone()).expect("dimension matches")))
                .collect();
            for (y, s) in trials.into_iter().zip(scored) {
                if s > best {
                    best = s;
                    x = y;
                }
            }
        }
        step *= 0.5;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::DyadicInterval;
    use crate::norm::RademacherMode;
    use crate::omega::universe_len;

    #[test]
    fn identity_and_multiples() {
        let spec = SpaceSpec::lp(2.0, RademacherMode::Independent).unwrap();
        let id: OmegaOperator<f64> = OmegaOperator::identity(2);
        let s = NormSampler::new(1, 8);
        assert!((operator_norm_lower(&id, &spec, &s) - 1.0).abs() < 1e-9);
        assert!((operator_norm_lower(&id.scale(&2.0), &spec, &s) - 2.0).abs() < 1e-9);
        let d: Vec<f64> = (0..universe_len(2)).map(|i| 1.0 / (i + 1) as f64).collect();
        let diag = OmegaOperator::diagonal(2, &d).unwrap();
        assert!(operator_norm_lower(&diag, &spec, &s) >= 1.0 - 1e-9);
    }

    #[test]
    fn column_bound_examples() {
        let spec = SpaceSpec::lp(1.0, RademacherMode::Constant).unwrap();
        assert_eq!(certified_column_bound(&OmegaOperator::<f64>::zeros(2, 2), &spec), 0.0);
        let mut m = crate::linalg::DenseMatrix::zeros(universe_len(1), universe_len(1));
        m.set(0, 0, 1.0);
        let single = OmegaOperator::square(1, m).unwrap();
        assert!((certified_column_bound(&single, &spec) - 2.0).abs() < 1e-15);
        let h = OmegaIndex::new(3, DyadicInterval::new(2, 1).unwrap()).unwrap();
        assert!((haar_norm(h, &SpaceSpec::lp(2.0, RademacherMode::Constant).unwrap()) - 0.5).abs() < 1e-15);
    }
}
