use serde_json::json;

use super::{check_claim, PipelineConfig, StageCertificate};
use crate::dyadic::{DyadicInterval, OmegaIndex};
use crate::error::{Error, Result};
use crate::faithful::faithful_from_frequencies;
use crate::omega::{lift_system, OmegaFaithfulSystem};
use crate::operator::{build_ab_hat, conjugate, residual, OmegaOperator};
use crate::scalar::Scalar;

/// Index of a value of `values` that other values accumulate at.
///
/// Starting from the full spread, keep the values whose closed
/// `ε`-neighbourhood holds the most entries and halve `ε` until one value
/// remains. Remaining ties go to the larger `|c|`, then to the smaller index.
pub fn cluster_point<S: Scalar>(values: &[S]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let v: Vec<f64> = values.iter().map(Scalar::to_f64).collect();
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut eps = hi - lo;
    let mut cand: Vec<usize> = (0..v.len()).collect();
    for _ in 0..64 {
        if eps <= 0.0 {
            break;
        }
        let counts: Vec<usize> = cand.iter().map(|&j| v.iter().filter(|x| (*x - v[j]).abs() <= eps).count()).collect();
        let best = *counts.iter().max().expect("nonempty");
        cand = cand.into_iter().zip(counts).filter(|(_, c)| *c == best).map(|(j, _)| j).collect();
        if cand.iter().all(|&j| v[j] == v[cand[0]]) {
            break;
        }
        eps /= 2.0;
    }
    cand.into_iter().reduce(|a, b| if v[b].abs() > v[a].abs() { b } else { a })
}

#[derive(Clone, Debug)]
pub struct ScalarReduction<S> {
    pub c: S,
    /// `N(n')` for the kept components.
    pub n_map: Vec<u32>,
    pub a: OmegaOperator<S>,
    pub b: OmegaOperator<S>,
    pub system: OmegaFaithfulSystem,
    pub output: OmegaOperator<S>,
    pub cert: StageCertificate<S>,
}

/// Passes from a diagonal that is constant on every component to a multiple
/// of the identity by keeping a subsequence of components whose constants
/// are within `8^{-1}4^{-n'}η` of a cluster point.
pub fn scalar_reduce<S: Scalar>(c_op: &OmegaOperator<S>, cfg: &PipelineConfig) -> Result<ScalarReduction<S>> {
    const STAGE: &str = "scalar-reduce";
    let n_in = c_op.domain_n_max();
    let diag = c_op.diagonal_of();
    let mut values = Vec::new();
    for n in 0..=n_in {
        let c = diag.get(OmegaIndex::new(n, DyadicInterval::UNIT)?);
        if let Some(i) = DyadicInterval::up_to(n).find(|i| diag.get(OmegaIndex::new(n, *i).expect("fits")) != c) {
            return Err(Error::Stage {
                stage: STAGE.into(),
                reason: format!("diagonal is not constant on component {n} (interval {i:?})"),
            });
        }
        values.push(c);
    }
    let j = cluster_point(&values).expect("at least component 0");
    let c = values[j].clone();
    let mut n_map = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let k = n_map.len() as u32;
        let tol = S::from_f64(cfg.eta)? * S::dyadic(1, 3 + 2 * k);
        if (v.clone() - c.clone()).abs() <= tol {
            n_map.push(i as u32);
        }
    }
    let systems = (0..n_map.len() as u32)
        .map(|k| faithful_from_frequencies(&(0..=k).collect::<Vec<_>>(), k + 1))
        .collect::<Result<Vec<_>>>()?;
    let system = lift_system(systems, n_map.clone(), n_in)?;
    let n_t = system.target_depth();
    let (a, b) = build_ab_hat::<S>(&system)?;
    let output = OmegaOperator::scalar(n_t, c.clone());
    let s = conjugate(&a, c_op, &b)?;
    let certified = residual(&s, &output, &cfg.space)?;
    check_claim(cfg, STAGE, certified, cfg.eta)?;
    let cert = StageCertificate {
        stage: STAGE.into(),
        input_digest: c_op.digest(),
        a: a.clone(),
        b: b.clone(),
        output: output.clone(),
        constant: 1.0,
        claimed: cfg.eta,
        certified,
        projectional: true,
        details: json!({
            "c": c.to_json(),
            "cluster_index": j,
            "n_map": n_map,
            "components_in": n_in + 1,
        }),
    };
    Ok(ScalarReduction { c, n_map, a, b, system, output, cert })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_of_a_converging_sequence() {
        let v = [3.0, 0.5, 0.26, 0.251, 0.2501, -1.0];
        assert_eq!(cluster_point(&v), Some(3));
        assert_eq!(cluster_point(&[0.5, -0.5, 0.5, -0.5]), Some(0));
        assert_eq!(cluster_point(&[0.25, -0.5, 0.25, -0.5]), Some(1));
        assert_eq!(cluster_point::<f64>(&[]), None);
    }
}
