use serde_json::json;

use super::{derive_seed, PipelineConfig, StageCertificate};
use crate::error::{Error, Result};
use crate::gamlen_gaudet::{gamlen_gaudet_select, SelectionOptions};
use crate::norm::RademacherMode;
use crate::omega::{compress_tn, lift_system};
use crate::operator::{build_ab_almost, conjugate, residual, OmegaOperator};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct PositiveReduction<S> {
    /// `T̃ = A T B`, with every diagonal entry `≥ δ`.
    pub t_tilde: OmegaOperator<S>,
    pub a: OmegaOperator<S>,
    pub b: OmegaOperator<S>,
    /// Sign `σ` folded into `A`.
    pub sign: i8,
    pub route: &'static str,
    pub cert: StageCertificate<S>,
}

/// Turns a `δ`-large diagonal into a positive one: `A T B` has all diagonal
/// entries `≥ δ`.
///
/// A diagonal of one sign only needs `±I`. With independent Rademacher
/// signs a mixed diagonal is handled by the sign multiplier, which is
/// bounded there. With a constant Rademacher sign the multiplier is not
/// available, so every component is replaced by an almost faithful system
/// on which the diagonal has one common sign.
pub fn reduce_positive_diagonal<S: Scalar>(t: &OmegaOperator<S>, delta: f64, cfg: &PipelineConfig) -> Result<PositiveReduction<S>> {
    const STAGE: &str = "positive";
    if !t.is_square() {
        return Err(Error::Stage { stage: STAGE.into(), reason: "operator is not square".into() });
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::Stage { stage: STAGE.into(), reason: "δ must be positive".into() });
    }
    let n_in = t.domain_n_max();
    let diag = t.diagonal_of();
    if !diag.is_delta_large(delta, false)? {
        return Err(Error::Hypothesis {
            index: "diagonal".into(),
            reason: format!("min |d| = {} < δ = {delta}", diag.min_abs().to_f64()),
        });
    }
    let delta_s = S::from_f64(delta)?;
    let values = diag.entries();
    let all_pos = values.iter().all(|v| *v >= delta_s);
    let all_neg = values.iter().all(|v| -v.clone() >= delta_s);
    let (a, b, sign, route, constant, projectional, details) = if all_pos || all_neg {
        let sign: i8 = if all_pos { 1 } else { -1 };
        let a = OmegaOperator::scalar(n_in, S::from_i64(sign as i64));
        (a, OmegaOperator::identity(n_in), sign, "uniform-sign", 1.0, all_pos, json!({}))
    } else if cfg.space.rademacher == RademacherMode::Independent {
        let signs: Vec<S> = values.iter().map(|v| S::from_i64(if *v > S::zero() { 1 } else { -1 })).collect();
        let a = OmegaOperator::diagonal(n_in, &signs)?;
        (a, OmegaOperator::identity(n_in), 1, "sign-multiplier", 1.0, false, json!({}))
    } else {
        let (a, b, sign, details) = common_sign_systems(t, delta, cfg)?;
        let constant = 4.0 + cfg.eta;
        (a, b, sign, "common-sign-systems", constant, sign > 0, details)
    };
    let t_tilde = conjugate(&a, t, &b)?;
    let out_diag = t_tilde.diagonal_of();
    if let Some(p) = out_diag.entries().iter().position(|v| *v < delta_s) {
        return Err(Error::Stage {
            stage: STAGE.into(),
            reason: format!("diagonal entry {p} of the reduced operator is below δ"),
        });
    }
    let certified = residual(&t_tilde, &t_tilde, &cfg.space)?;
    let cert = StageCertificate {
        stage: STAGE.into(),
        input_digest: t.digest(),
        a: a.clone(),
        b: b.clone(),
        output: t_tilde.clone(),
        constant,
        claimed: 0.0,
        certified,
        projectional,
        details: json!({ "route": route, "sign": sign, "delta": delta, "selection": details }),
    };
    Ok(PositiveReduction { t_tilde, a, b, sign, route, cert })
}

type Pair<S> = (OmegaOperator<S>, OmegaOperator<S>, i8, serde_json::Value);

/// One almost faithful system per target component, all with the sign of
/// component 0; `A` absorbs that sign.
fn common_sign_systems<S: Scalar>(t: &OmegaOperator<S>, delta: f64, cfg: &PipelineConfig) -> Result<Pair<S>> {
    let n_in = t.domain_n_max();
    let mut systems = Vec::new();
    let mut n_map: Vec<u32> = Vec::new();
    let mut picks = Vec::new();
    let mut sign = None;
    'targets: for n in 0..=n_in {
        let eta_n = cfg.eta * (0.25f64).powi(n as i32 + 2);
        let lo = n_map.last().map_or(n, |p| (p + 1).max(n));
        for big in lo..=n_in {
            let comp = compress_tn(t, big)?;
            let opts = SelectionOptions { seed: derive_seed(cfg.seed, &[0x5e1, n as u64, big as u64]), retries: 64, sign };
            let Ok(sel) = gamlen_gaudet_select(&comp, n, eta_n, delta, &opts) else {
                continue;
            };
            sign.get_or_insert(sel.sign);
            let mut j = sel.to_json();
            j["component"] = json!(n);
            j["N"] = json!(big);
            picks.push(j);
            systems.push(sel.system);
            n_map.push(big);
            continue 'targets;
        }
        break;
    }
    let Some(sign) = sign else {
        return Err(Error::Stage {
            stage: "positive".into(),
            reason: "no component admits a common-sign system of depth 0".into(),
        });
    };
    let system = lift_system(systems, n_map.clone(), n_in)?;
    let (a, b) = build_ab_almost::<S>(&system, cfg.eta, false)?;
    let a = a.scale(&S::from_i64(sign as i64));
    Ok((a, b, sign, json!({ "n_map": n_map, "components": picks, "system": system.to_json() })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::SpaceSpec;
    use crate::omega::universe_len;
    use crate::dyadic::DyadicInterval;
    use crate::scalar::Rational;

    fn cfg(mode: RademacherMode) -> PipelineConfig {
        PipelineConfig::new(SpaceSpec::lp(2.0, mode).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn negative_diagonal_flips() {
        let t: OmegaOperator<Rational> = OmegaOperator::scalar(2, Rational::dyadic(-3, 2));
        let out = reduce_positive_diagonal(&t, 0.5, &cfg(RademacherMode::Constant)).unwrap();
        assert_eq!(out.sign, -1);
        assert_eq!(out.t_tilde, OmegaOperator::scalar(2, Rational::dyadic(3, 2)));
    }

    #[test]
    fn mixed_diagonal_with_independent_signs() {
        let d: Vec<Rational> = (0..universe_len(2)).map(|i| Rational::dyadic(if i % 3 == 0 { -1 } else { 1 }, 1)).collect();
        let t = OmegaOperator::diagonal(2, &d).unwrap();
        let out = reduce_positive_diagonal(&t, 0.5, &cfg(RademacherMode::Independent)).unwrap();
        assert_eq!(out.route, "sign-multiplier");
        assert_eq!(out.t_tilde, OmegaOperator::scalar(2, Rational::dyadic(1, 1)));
    }

    #[test]
    fn mixed_diagonal_with_a_constant_sign() {
        // Component n is positive on the left half of [0,1) below level 0.
        let n_max = 4;
        let left = DyadicInterval::new(1, 0).unwrap();
        let d: Vec<Rational> = crate::dyadic::universe(n_max)
            .unwrap()
            .indices()
            .iter()
            .map(|idx| {
                let i = idx.interval();
                Rational::from_i64(if i.level() == 0 || left.contains(i) { 1 } else { -1 })
            })
            .collect();
        let t = OmegaOperator::diagonal(n_max, &d).unwrap();
        let out = reduce_positive_diagonal(&t, 1.0, &cfg(RademacherMode::Constant)).unwrap();
        assert_eq!(out.route, "common-sign-systems");
        assert_eq!(out.sign, 1);
        assert!(out.t_tilde.diagonal_of().values().iter().all(|v| *v >= Rational::from_i64(1)));
        assert_eq!(out.cert.certified, 0.0);
    }
}
