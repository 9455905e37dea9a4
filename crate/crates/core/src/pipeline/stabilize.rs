use serde_json::json;

use super::{check_claim, PipelineConfig, StageCertificate};
use crate::dyadic::{count_up_to, DyadicInterval, OmegaIndex};
use crate::error::{Error, Result};
use crate::faithful::{faithful_from_frequencies, FiniteFaithfulSystem};
use crate::omega::{lift_system, OmegaFaithfulSystem};
use crate::operator::{build_ab_hat, conjugate, residual, OmegaOperator};
use crate::scalar::Scalar;
use crate::step::HARD_RESOLUTION_CAP;

/// Lexicographically smallest `k_0 < … < k_n` with `|α_{k_i} − α_{k_0}| ≤ η`.
pub fn select_frequencies<S: Scalar>(alpha: &[S], n: usize, eta: &S) -> Option<Vec<usize>> {
    (0..alpha.len()).find_map(|k0| {
        let mut picked = vec![k0];
        for k in k0 + 1..alpha.len() {
            if picked.len() == n + 1 {
                break;
            }
            if (alpha[k].clone() - alpha[k0].clone()).abs() <= *eta {
                picked.push(k);
            }
        }
        (picked.len() == n + 1).then_some(picked)
    })
}

/// One component of the stabilization.
#[derive(Clone, Debug)]
pub struct ComponentStabilization<S> {
    pub frequencies: Vec<u32>,
    pub c: S,
    pub system: FiniteFaithfulSystem,
    /// `d̂_I = Σ_{K ∈ ℬ_I} d_K |K|/|I|` in `iota` order.
    pub dhat: Vec<S>,
}

/// Stabilizes a multiplier on `Y_N` with entries `d` (in `iota - 1` order) and
/// level values `α_0..α_N`: a faithful system of depth `n` on frequencies
/// chosen by [`select_frequencies`], `c = α_{k_0}`.
pub fn stabilize_component<S: Scalar>(d: &[S], alpha: &[S], n: u32, eta: &S) -> Result<Option<ComponentStabilization<S>>> {
    let big = alpha.len() as u32 - 1;
    if d.len() != count_up_to(big) {
        return Err(Error::Dimension(format!("{} entries for {} levels", d.len(), alpha.len())));
    }
    let Some(k) = select_frequencies(alpha, n as usize, eta) else {
        return Ok(None);
    };
    let frequencies: Vec<u32> = k.iter().map(|v| *v as u32).collect();
    let system = faithful_from_frequencies(&frequencies, HARD_RESOLUTION_CAP.min(big + 1))?;
    let dhat = DyadicInterval::up_to(n)
        .map(|i| {
            let parts: Vec<S> =
                system.block(i).iter().map(|(kk, _)| d[kk.iota() as usize - 1].clone() * kk.measure::<S>()).collect();
            S::sum_slice(&parts) / i.measure::<S>()
        })
        .collect();
    Ok(Some(ComponentStabilization { frequencies, c: alpha[k[0]].clone(), system, dhat }))
}

#[derive(Clone, Debug)]
pub struct Stabilization<S> {
    /// `C h_I^n = c_n h_I^n`.
    pub c_op: OmegaOperator<S>,
    pub scalars: Vec<S>,
    pub a: OmegaOperator<S>,
    pub b: OmegaOperator<S>,
    pub system: OmegaFaithfulSystem,
    pub cert: StageCertificate<S>,
}

/// Reduces a level-wise stabilized diagonal `d` to a diagonal that is
/// constant on every component. Without an `alpha` table the level means of
/// `d` itself are used.
pub fn stabilize_levels<S: Scalar>(
    d: &OmegaOperator<S>,
    alpha: Option<&[Vec<S>]>,
    cfg: &PipelineConfig,
) -> Result<Stabilization<S>> {
    const STAGE: &str = "stabilize";
    let n_in = d.domain_n_max();
    let diag = d.diagonal_of();
    let table: Vec<Vec<S>> = match alpha {
        Some(t) if t.len() == n_in as usize + 1 => t.to_vec(),
        Some(t) => {
            return Err(Error::Dimension(format!("α table with {} rows for n_max {n_in}", t.len())));
        }
        None => (0..=n_in)
            .map(|n| (0..=n).map(|k| diag.level_average(n, k)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?,
    };
    let gamma = table.iter().flatten().map(|a| a.abs().to_f64()).fold(0.0, f64::max);
    let mut systems = Vec::new();
    let mut n_map = Vec::new();
    let mut scalars = Vec::new();
    let mut parts = Vec::new();
    'targets: for n in 0..=n_in {
        let eta_n = cfg.eta * (0.125f64).powi(n as i32);
        let eta_s = S::from_f64(eta_n)?;
        let lo = n_map.last().map_or(n, |p: &u32| (p + 1).max(n));
        for big in lo..=n_in {
            let entries: Vec<S> = DyadicInterval::up_to(big).map(|i| diag.get(OmegaIndex::new(big, i).expect("fits"))).collect();
            let row = &table[big as usize];
            let Some(out) = stabilize_component(&entries, row, n, &eta_s)? else {
                continue;
            };
            // ξ for this component, exactly.
            let xi = DyadicInterval::up_to(big)
                .map(|i| (entries[i.iota() as usize - 1].clone() - row[i.level() as usize].clone()).abs())
                .fold(S::zero(), |a, b| if b > a { b } else { a });
            let bound = eta_s.clone() + xi.clone();
            if let Some(p) = out.dhat.iter().position(|v| (v.clone() - out.c.clone()).abs() > bound) {
                return Err(Error::Stage {
                    stage: STAGE.into(),
                    reason: format!("|d̂ - c| exceeds η + ξ at iota {} of component {n}", p + 1),
                });
            }
            let n1 = super::formulas::n1(n as u64, gamma.max(f64::MIN_POSITIVE), eta_n)
                .map(|v| v.to_string())
                .unwrap_or_else(|_| "undefined".into());
            parts.push(json!({
                "component": n,
                "N": big,
                "frequencies": out.frequencies,
                "c": out.c.to_json(),
                "xi": xi.to_f64(),
                "eta_n": eta_n,
                "pigeonhole_bins": (2.0 * gamma / eta_n).ceil(),
                "sufficient_N1": n1,
            }));
            systems.push(out.system);
            n_map.push(big);
            scalars.push(out.c);
            continue 'targets;
        }
        break;
    }
    let system = lift_system(systems, n_map.clone(), n_in)?;
    let n_t = system.target_depth();
    let entries: Vec<S> = (0..=n_t)
        .flat_map(|n| std::iter::repeat_n(scalars[n as usize].clone(), count_up_to(n)))
        .collect();
    let c_op = OmegaOperator::diagonal(n_t, &entries)?;
    let (a, b) = build_ab_hat::<S>(&system)?;
    let s = conjugate(&a, d, &b)?;
    let certified = residual(&s, &c_op, &cfg.space)?;
    let claimed = 16.0 * cfg.eta;
    check_claim(cfg, STAGE, certified, claimed)?;
    let cert = StageCertificate {
        stage: STAGE.into(),
        input_digest: d.digest(),
        a: a.clone(),
        b: b.clone(),
        output: c_op.clone(),
        constant: 1.0,
        claimed,
        certified,
        projectional: true,
        details: json!({ "n_map": n_map, "gamma": gamma, "components": parts }),
    };
    Ok(Stabilization { c_op, scalars, a, b, system, cert })
}
