use serde_json::{json, Value};

use super::{check_claim, derive_seed, PipelineConfig, StageCertificate};
use crate::dyadic::{count_up_to, DyadicInterval, OmegaIndex};
use crate::error::{Error, Result};
use crate::faithful::{faithful_with_signs, randomize_faithful_stream, FiniteFaithfulSystem};
use crate::linalg::DenseMatrix;
use crate::norm::certified_column_bound;
use crate::omega::{compress_tn, lift_system, position_of, OmegaFaithfulSystem};
use crate::operator::{build_ab_hat, conjugate, residual, OmegaOperator};
use crate::scalar::Scalar;
use crate::step::HARD_RESOLUTION_CAP;

/// `η_{n,m} = η / (2 (n_max+1)² S_n S_m)` with `S_n = Σ_{I ∈ 𝒟_{≤n}} 1/|I|`,
/// so that `Σ η_{n,m}/(|I||J|) = η/2` over the truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtaSchedule {
    pub eta: f64,
    pub n_max: u32,
}

pub fn eta_schedule(eta: f64, n_max: u32) -> EtaSchedule {
    EtaSchedule { eta, n_max }
}

impl EtaSchedule {
    fn s(n: u32) -> f64 {
        ((4f64).powi(n as i32 + 1) - 1.0) / 3.0
    }

    pub fn pair(&self, n: u32, m: u32) -> f64 {
        let k = (self.n_max + 1) as f64;
        self.eta / (2.0 * k * k * Self::s(n) * Self::s(m))
    }

    /// `η_n = min_{m ≤ n} min(η_{n,m}, η_{m,n}) = η_{n,n}`.
    pub fn component(&self, n: u32) -> f64 {
        self.pair(n, n)
    }

    /// `Σ_{(n,I),(m,J)} η_{n,m}/(|I||J|)`.
    pub fn weighted_sum(&self) -> f64 {
        let mut total = 0.0;
        for n in 0..=self.n_max {
            for m in 0..=self.n_max {
                total += self.pair(n, m) * Self::s(n) * Self::s(m);
            }
        }
        total
    }
}

/// `α_k = 2^{-(m+k)} Σ_{K ∈ 𝒟_{m+k}} ⟨h_K, T h_K⟩/|K|` for an operator on
/// `Y_N` given in the `iota - 1` order.
pub fn alpha_averages<S: Scalar>(t_n: &DenseMatrix<S>, m: u32, k: u32) -> Result<S> {
    let level = m + k;
    if count_up_to(level) > t_n.rows() {
        return Err(Error::Dimension(format!("level {level} is deeper than the operator")));
    }
    let parts: Vec<S> = DyadicInterval::generation(level)
        .map(|i| {
            let p = i.iota() as usize - 1;
            t_n.get(p, p).clone()
        })
        .collect();
    Ok(S::sum_slice(&parts) / S::from_i64(parts.len() as i64))
}

/// A component system placed in the ambient universe: per `I` the positions,
/// signs and levels of `ℬ_I`.
type Placed = Vec<Vec<(usize, i8, u32)>>;

fn place(sys: &FiniteFaithfulSystem, big: u32) -> Placed {
    sys.blocks()
        .iter()
        .map(|b| {
            b.iter()
                .map(|(k, t)| (position_of(OmegaIndex::new(big, k).expect("level fits")), t, k.level()))
                .collect()
        })
        .collect()
}

/// `T b` as a coefficient vector.
fn image<S: Scalar>(t: &DenseMatrix<S>, block: &[(usize, i8, u32)]) -> Vec<S> {
    let mut out = vec![S::zero(); t.rows()];
    for &(p, th, _) in block {
        for (o, v) in out.iter_mut().zip(t.col(p)) {
            if !v.is_zero() {
                *o = if th > 0 { o.clone() + v.clone() } else { o.clone() - v.clone() };
            }
        }
    }
    out
}

/// `⟨b, v⟩ = Σ_{K ∈ ℬ} θ_K |K| v_K`.
fn pair_with<S: Scalar>(block: &[(usize, i8, u32)], v: &[S]) -> S {
    let mut acc = S::zero();
    for &(p, th, level) in block {
        if v[p].is_zero() {
            continue;
        }
        let term = v[p].clone() * S::dyadic(1, level);
        acc = if th > 0 { acc + term } else { acc - term };
    }
    acc
}

struct Prior<S> {
    n: u32,
    placed: Placed,
    images: Vec<Vec<S>>,
}

struct Tolerances {
    off: Vec<f64>,
    diag: f64,
    cross: Vec<(f64, f64)>,
}

/// Worst ratio `value / tolerance` over all conditions, and the raw `X_{I,J}`.
fn evaluate<S: Scalar>(
    t: &DenseMatrix<S>,
    placed: &Placed,
    alpha: &[S],
    priors: &[Prior<S>],
    tol: &Tolerances,
    slack: f64,
) -> (bool, f64, Vec<S>) {
    let images: Vec<Vec<S>> = placed.iter().map(|b| image(t, b)).collect();
    let count = placed.len();
    let mut x = Vec::with_capacity(count * count);
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut judge = |value: S, bound: f64| {
        let b = S::from_f64(bound * slack).expect("finite tolerance");
        if value.abs() > b {
            ok = false;
        }
        worst = worst.max(value.abs().to_f64() / bound);
    };
    for (ii, bi) in placed.iter().enumerate() {
        let i = DyadicInterval::from_iota(ii as u64 + 1).expect("valid iota");
        for (jj, img) in images.iter().enumerate() {
            let v = pair_with(bi, img);
            x.push(v.clone());
            if ii == jj {
                let d = v / i.measure::<S>();
                judge(d - alpha[i.level() as usize].clone(), tol.diag);
            } else {
                judge(v, tol.off[ii]);
            }
        }
    }
    for (p, prior) in priors.iter().enumerate() {
        let (to_prior, from_prior) = tol.cross[p];
        for bi in placed {
            for img in &prior.images {
                judge(pair_with(bi, img), to_prior);
            }
        }
        for bj in &prior.placed {
            for img in &images {
                judge(pair_with(bj, img), from_prior);
            }
        }
    }
    (ok, worst, x)
}

/// Running mean and variance per pair (Welford).
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / c;
            *s += d * (v - *m);
        }
    }

    fn summary(&self, side: usize, bound: f64) -> Value {
        let mut max_mean: f64 = 0.0;
        let mut max_var: f64 = 0.0;
        for i in 0..side {
            for j in 0..side {
                if i == j {
                    continue;
                }
                let p = i * side + j;
                max_mean = max_mean.max(self.mean[p].abs());
                if self.count > 1 {
                    max_var = max_var.max(self.m2[p] / (self.count - 1) as f64);
                }
            }
        }
        json!({
            "draws": self.count,
            "max_abs_mean_offdiag": max_mean,
            "max_variance_offdiag": max_var,
            "variance_bound": bound,
        })
    }
}

/// Output of [`diagonalize`].
#[derive(Clone, Debug)]
pub struct Diagonalization<S> {
    pub d: OmegaOperator<S>,
    pub a: OmegaOperator<S>,
    pub b: OmegaOperator<S>,
    pub system: OmegaFaithfulSystem,
    /// `α_k^n`, `k = 0..=n`, for every target component.
    pub alpha: Vec<Vec<S>>,
    /// Achieved `max_I |d_I^n − α_k^n|` per component.
    pub xi: Vec<f64>,
    pub cert: StageCertificate<S>,
}

/// Builds a faithful system that almost diagonalizes `t` and returns its
/// diagonal. Target components are added greedily; component `n` goes to the
/// smallest `N(n) > N(n−1)` for which a sign draw meets all tolerances.
pub fn diagonalize<S: Scalar>(t: &OmegaOperator<S>, cfg: &PipelineConfig) -> Result<Diagonalization<S>> {
    const STAGE: &str = "diagonalize";
    cfg.require_weakly_null(STAGE)?;
    if !t.is_square() {
        return Err(Error::Stage { stage: STAGE.into(), reason: "operator is not square".into() });
    }
    let n_in = t.domain_n_max();
    let sched = eta_schedule(cfg.eta, n_in);
    let gamma = certified_column_bound(t, &cfg.space);
    let tf = t.to_f64();
    let mut priors_s: Vec<Prior<S>> = Vec::new();
    let mut priors_f: Vec<Prior<f64>> = Vec::new();
    let mut systems = Vec::new();
    let mut n_map = Vec::new();
    let mut alpha_table = Vec::new();
    let mut details = Vec::new();
    let mut best_failure = f64::INFINITY;

    'components: for n in 0..=n_in {
        let eta_n = sched.component(n);
        let lo = n_map.last().map_or(n, |p: &u32| (p + 1).max(n));
        for big in lo..=n_in {
            let m = big - n;
            let comp = compress_tn(t, big)?;
            let alpha: Vec<S> = (0..=n).map(|k| alpha_averages(&comp, m, k)).collect::<Result<_>>()?;
            let alpha_f: Vec<f64> = alpha.iter().map(Scalar::to_f64).collect();
            let tol = Tolerances {
                off: DyadicInterval::up_to(n).map(|i| eta_n * i.measure::<f64>()).collect(),
                diag: (0.125f64).powi(n as i32) * eta_n,
                cross: priors_f.iter().map(|p| (sched.pair(n, p.n), sched.pair(p.n, n))).collect(),
            };
            let side = count_up_to(n);
            let mut moments = Moments::new(side * side);
            let stream_seed = derive_seed(cfg.seed, &[n as u64, big as u64]);
            let mut accepted = None;
            let mut best = f64::INFINITY;
            for draw in 0..cfg.max_samples + cfg.diagnostic_draws {
                match &accepted {
                    Some((_, _, a)) if draw > a + cfg.diagnostic_draws => break,
                    None if draw >= cfg.max_samples => break,
                    _ => {}
                }
                let k: Vec<u32> = (m..=m + n).collect();
                let sys = if draw == 0 {
                    faithful_with_signs(&k, HARD_RESOLUTION_CAP, |_| 1)?
                } else {
                    randomize_faithful_stream(n, m, stream_seed, draw as u64)?
                };
                let placed = place(&sys, big);
                let (ok, worst, x) = evaluate(tf.matrix(), &placed, &alpha_f, &priors_f, &tol, 1.0 + 1e-9);
                moments.push(&x);
                best = best.min(worst);
                if accepted.is_some() || !ok {
                    continue;
                }
                let exact_ok = if S::MODE == crate::scalar::NumericMode::Float {
                    true
                } else {
                    evaluate(t.matrix(), &placed, &alpha, &priors_s, &tol, 1.0).0
                };
                if exact_ok {
                    accepted = Some((sys, placed, draw));
                }
            }
            let Some((sys, placed, draw)) = accepted else {
                best_failure = best_failure.min(best);
                continue;
            };
            let worst_case = worst_case_cross(&tf, big, &priors_f);
            let n0 = super::formulas::n0(n as u64, gamma.max(f64::MIN_POSITIVE), eta_n)
                .map(|v| v.to_string())
                .unwrap_or_else(|_| "undefined".into());
            details.push(json!({
                "component": n,
                "N": big,
                "m": m,
                "accepted_draw": draw,
                "eta_n": eta_n,
                "diag_tolerance": tol.diag,
                "worst_case_cross_sum": worst_case,
                "sufficient_N0": n0,
                "concentration": moments.summary(side, 3.0 * gamma * gamma * (-(m as f64) / 2.0).exp2()),
            }));
            let images_s = placed.iter().map(|b| image(t.matrix(), b)).collect();
            let images_f = placed.iter().map(|b| image(tf.matrix(), b)).collect();
            priors_s.push(Prior { n, placed: placed.clone(), images: images_s });
            priors_f.push(Prior { n, placed, images: images_f });
            systems.push(sys);
            n_map.push(big);
            alpha_table.push(alpha);
            continue 'components;
        }
        break;
    }
    if systems.is_empty() {
        return Err(Error::Stage {
            stage: STAGE.into(),
            reason: format!("no sign draw diagonalizes component 0; best tolerance ratio {best_failure:.3e}"),
        });
    }
    let system = lift_system(systems, n_map.clone(), n_in)?;
    let (a, b) = build_ab_hat::<S>(&system)?;
    let s = conjugate(&a, t, &b)?;
    let n_t = system.target_depth();
    let diag = s.diagonal_of();
    let d = OmegaOperator::diagonal(n_t, diag.entries())?;
    let certified = residual(&s, &d, &cfg.space)?;
    check_claim(cfg, STAGE, certified, cfg.eta)?;
    let mut xi = Vec::new();
    for n in 0..=n_t {
        let mut worst: f64 = 0.0;
        for i in DyadicInterval::up_to(n) {
            let dv = diag.get(OmegaIndex::new(n, i)?) - alpha_table[n as usize][i.level() as usize].clone();
            worst = worst.max(dv.abs().to_f64());
        }
        xi.push(worst);
    }
    let cert = StageCertificate {
        stage: STAGE.into(),
        input_digest: t.digest(),
        a: a.clone(),
        b: b.clone(),
        output: d.clone(),
        constant: 1.0,
        claimed: cfg.eta,
        certified,
        projectional: true,
        details: json!({
            "n_map": n_map,
            "gamma": gamma,
            "schedule_weighted_sum": sched.weighted_sum(),
            "xi": xi,
            "alpha": alpha_table.iter().map(|r| r.iter().map(Scalar::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "components": details,
            "system": system.to_json(),
        }),
    };
    Ok(Diagonalization { d, a, b, system, alpha: alpha_table, xi, cert })
}

/// `max_J Σ_K |⟨h_K^N, T b_J⟩|` and `max_J Σ_K |⟨b_J, T h_K^N⟩|` over prior
/// components, the sign-independent sums behind the cross-term condition.
fn worst_case_cross(t: &OmegaOperator<f64>, big: u32, priors: &[Prior<f64>]) -> [f64; 2] {
    let ks: Vec<(usize, u32)> = DyadicInterval::up_to(big)
        .map(|k| (position_of(OmegaIndex::new(big, k).expect("level fits")), k.level()))
        .collect();
    let mut out = [0.0f64; 2];
    for prior in priors {
        for (bj, img) in prior.placed.iter().zip(&prior.images) {
            let into: f64 = ks.iter().map(|&(p, l)| (img[p] * (-(l as f64)).exp2()).abs()).sum();
            let from: f64 = ks
                .iter()
                .map(|&(p, _)| {
                    bj.iter()
                        .map(|&(q, th, l)| th as f64 * (-(l as f64)).exp2() * t.matrix().get(q, p))
                        .sum::<f64>()
                        .abs()
                })
                .sum();
            out[0] = out[0].max(into);
            out[1] = out[1].max(from);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::{RademacherMode, SpaceSpec};
    use crate::omega::universe_len;
    use crate::scalar::Rational;

    fn cfg() -> PipelineConfig {
        PipelineConfig::new(SpaceSpec::lp(1.0, RademacherMode::Independent).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn schedule_sums_to_half_eta() {
        let s = eta_schedule(0.3, 4);
        assert!((s.weighted_sum() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn identity_in_one_draw() {
        let t: OmegaOperator<Rational> = OmegaOperator::identity(2);
        let out = diagonalize(&t, &cfg()).unwrap();
        assert_eq!(out.d, OmegaOperator::identity(2));
        assert_eq!(out.cert.certified, 0.0);
        assert!(out.cert.details["components"].as_array().unwrap().iter().all(|c| c["accepted_draw"] == 0));
    }

    #[test]
    fn multiples_of_identity_are_exact() {
        let c = Rational::dyadic(3, 2);
        let t = OmegaOperator::scalar(2, c.clone());
        let out = diagonalize(&t, &cfg()).unwrap();
        assert_eq!(out.d, OmegaOperator::scalar(2, c.clone()));
        assert!(out.alpha.iter().flatten().all(|a| *a == c));
    }

    #[test]
    fn alpha_of_a_random_diagonal_is_the_level_mean() {
        let d: Vec<f64> = (0..universe_len(3)).map(|i| (i * 37 % 11) as f64 / 8.0).collect();
        let t = OmegaOperator::diagonal(3, &d).unwrap();
        let comp = compress_tn(&t, 3).unwrap();
        let level2: Vec<f64> = DyadicInterval::generation(2).map(|i| *comp.get(i.iota() as usize - 1, i.iota() as usize - 1)).collect();
        let mean = level2.iter().sum::<f64>() / 4.0;
        assert!((alpha_averages(&comp, 1, 1).unwrap() - mean).abs() < 1e-15);
    }
}
