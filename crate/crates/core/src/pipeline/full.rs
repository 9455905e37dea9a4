use serde_json::{json, Value};

use super::{
    chain_totals, diagonalize, endgame_invert, formulas, reduce_positive_diagonal, scalar_reduce, stabilize_levels, Branch,
    FactorMode, FactorizationCertificate, PipelineConfig, StageCertificate,
};
use crate::error::{Error, Result};
use crate::norm::{certified_column_bound, operator_norm_lower, RademacherMode};
use crate::operator::OmegaOperator;
use crate::scalar::Scalar;

enum Route {
    Positive,
    Mixed,
    Primary,
}

/// Runs the whole chain on `t` and inverts the result.
///
/// With a positive `δ`-large diagonal the chain runs on `T` directly; with a
/// mixed one the sign reduction comes first. In the primary mode the chain
/// runs on `T` and ends at some `c`; for `c < 1/2` the same factors are used
/// for `I − T`, which ends at `1 − c` because every stage is projectional.
pub fn full_factor<S: Scalar>(t: &OmegaOperator<S>, cfg: &PipelineConfig) -> Result<FactorizationCertificate<S>> {
    cfg.validate()?;
    if !t.is_square() {
        return Err(Error::Dimension("the operator must map Y_ω(n_max) to itself".into()));
    }
    let n_in = t.domain_n_max();
    let diag = t.diagonal_of();
    let delta = if cfg.delta > 0.0 { cfg.delta } else { diag.min_abs().to_f64() };
    let large = delta > 0.0 && diag.is_delta_large(delta, false)?;
    let positive = delta > 0.0 && diag.is_delta_large(delta, true)?;
    let route = match cfg.mode {
        FactorMode::Primary => Route::Primary,
        FactorMode::LargeDiagonal if !large => {
            return Err(Error::Hypothesis {
                index: "diagonal".into(),
                reason: format!("the diagonal is not δ-large for δ = {delta}"),
            });
        }
        FactorMode::LargeDiagonal | FactorMode::Auto if positive => Route::Positive,
        FactorMode::LargeDiagonal | FactorMode::Auto if large => Route::Mixed,
        FactorMode::LargeDiagonal | FactorMode::Auto => Route::Primary,
    };

    let mut stages: Vec<StageCertificate<S>> = Vec::new();
    let mut x = t.clone();
    if let Route::Mixed = route {
        let pr = reduce_positive_diagonal(t, delta, cfg)?;
        x = pr.t_tilde;
        stages.push(pr.cert);
    }
    let dz = diagonalize(&x, cfg)?;
    stages.push(dz.cert);
    let st = stabilize_levels(&dz.d, Some(&dz.alpha), cfg)?;
    stages.push(st.cert);
    let sr = scalar_reduce(&st.c_op, cfg)?;
    stages.push(sr.cert);

    let mut a = stages[0].a.clone();
    let mut b = stages[0].b.clone();
    for s in &stages[1..] {
        a = s.a.compose(&a)?;
        b = b.compose(&s.b)?;
    }
    let projectional = stages.iter().all(|s| s.projectional);
    let half = S::dyadic(1, 1);
    let (branch, c, t_prime) = match route {
        Route::Primary if sr.c < half => {
            if !projectional {
                return Err(Error::Stage { stage: "branch".into(), reason: "the complement needs projectional stages".into() });
            }
            (Branch::IMinusT, S::one() - sr.c.clone(), OmegaOperator::identity(n_in).sub(t)?)
        }
        _ => (Branch::T, sr.c.clone(), t.clone()),
    };
    let links: Vec<(f64, f64)> = stages.iter().map(|s| (s.constant, s.certified)).collect();
    let claims: Vec<(f64, f64)> = stages.iter().map(|s| (s.constant, s.claimed)).collect();
    let (chain_constant, chain_error) = chain_totals(&links);
    let (_, chain_claimed) = chain_totals(&claims);

    let s_op = a.compose(&t_prime)?.compose(&b)?;
    let end = endgame_invert(&s_op, &a, &b, &c, chain_constant, &cfg.space)?;
    let norm_l = operator_norm_lower(&end.l, &cfg.space, &cfg.norm_sampler);
    let norm_r = operator_norm_lower(&end.r, &cfg.space, &cfg.norm_sampler);

    let gamma = certified_column_bound(t, &cfg.space);
    let n_t = end.l.codomain_n_max() as u64;
    let formulas = formulas(n_t, gamma, cfg.eta).map(|f| f.to_json()).unwrap_or(Value::Null);
    let (label, target) = match route {
        Route::Primary => ("2/(1-2η)+", if cfg.eta < 0.5 { 2.0 / (1.0 - 2.0 * cfg.eta) } else { f64::INFINITY }),
        Route::Mixed if cfg.space.rademacher == RademacherMode::Constant => ("4/δ+", 4.0 / delta),
        Route::Positive | Route::Mixed => ("1/δ+", 1.0 / delta),
    };
    let targets = json!({
        "chain_error": { "label": "18η", "value": 18.0 * cfg.eta },
        "product": { "label": label, "value": target },
    });
    Ok(FactorizationCertificate {
        operator_digest: t.digest(),
        space: cfg.space,
        config: cfg.to_json(),
        branch,
        c,
        delta,
        stages,
        a,
        b,
        l: end.l,
        r: end.r,
        chain_constant,
        chain_error,
        chain_claimed,
        residual: end.residual,
        neumann_bound: end.neumann_bound,
        product_bound: end.product_bound,
        norm_estimates: (norm_l, norm_r),
        targets,
        formulas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::SpaceSpec;
    use crate::scalar::Rational;

    fn cfg(mode: FactorMode) -> PipelineConfig {
        let mut c = PipelineConfig::new(SpaceSpec::lp(2.0, RademacherMode::Independent).unwrap(), 0.1).unwrap();
        c.mode = mode;
        c.norm_sampler.trials = 2;
        c
    }

    #[test]
    fn zero_and_identity_pick_their_branches() {
        let zero: OmegaOperator<Rational> = OmegaOperator::zeros(2, 2);
        let z = full_factor(&zero, &cfg(FactorMode::Primary)).unwrap();
        assert_eq!(z.branch, Branch::IMinusT);
        assert_eq!(z.c, Rational::from_i64(1));
        assert_eq!(z.chain_error, 0.0);
        let id: OmegaOperator<Rational> = OmegaOperator::identity(2);
        let i = full_factor(&id, &cfg(FactorMode::Primary)).unwrap();
        assert_eq!(i.branch, Branch::T);
        assert_eq!(i.c, Rational::from_i64(1));
        assert!(i.l.compose(&id).unwrap().compose(&i.r).unwrap().is_identity());
    }
}
