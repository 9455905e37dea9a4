//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero when any of them fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use haarfact::dyadic::DyadicInterval;
use haarfact::faithful::{faithful_with_signs, FiniteFaithfulSystem, SignStream};
use haarfact::generate::{generate_operator, GenParams, OperatorKind};
use haarfact::norm::{base_norm, certified_column_bound, norm_ratio, ExpectationStrategy, RademacherMode, SpaceSpec};
use haarfact::omega::{component_condexp_sum, conditional_expectation, lift_system, universe_len, OmegaBasis, OmegaCoefficients, Partition};
use haarfact::operator::{build_ab_hat, AnyOperator, OmegaOperator};
use haarfact::pipeline::{
    concentration_experiment, full_factor, n0, n1, n2, reduce_positive_diagonal, select_frequencies, stabilize_component,
    Branch, FactorMode, PipelineConfig, SparseComponentOperator,
};
use haarfact::scalar::{Rational, Scalar};
use haarfact::step::StepFunction;
use haarfact::verify::run_verify;

type Outcome = Result<(bool, String), String>;
type Mutation<'a> = (&'a str, Box<dyn Fn(&mut Value)>);
type Criterion = (&'static str, &'static str, u64, fn() -> Outcome);

fn q(p: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(d))
}

fn spaces() -> Vec<SpaceSpec> {
    let mut out = Vec::new();
    for p in [1.0, 2.0, 4.0] {
        for mode in [RademacherMode::Constant, RademacherMode::Independent] {
            out.push(SpaceSpec::lp(p, mode).unwrap());
        }
    }
    out
}

fn random_vector(n_max: u32, rng: &mut ChaCha8Rng) -> OmegaCoefficients<f64> {
    let v = (0..universe_len(n_max)).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    OmegaCoefficients::from_vec(n_max, v).unwrap()
}

/// A random faithful system of depth `n` on `n + 1` distinct levels of `0..=big`.
fn random_system(n: u32, big: u32, rng: &mut ChaCha8Rng) -> FiniteFaithfulSystem {
    let mut levels: Vec<u32> = (0..=big).collect();
    while levels.len() > n as usize + 1 {
        levels.remove(rng.gen_range(0..levels.len()));
    }
    let mut signs = SignStream::new(rng.gen(), 0);
    faithful_with_signs(&levels, big + 1, |k| signs.sign(k)).unwrap()
}

/// Target depth `≤ 2`, an increasing component map into `0..=4` and random
/// frequencies and signs in every component.
fn random_omega_system(seed: u64) -> haarfact::omega::OmegaFaithfulSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = (seed % 3) as u32;
    let ambient = 4;
    loop {
        let mut n_map: Vec<u32> = (0..=ambient).collect();
        while n_map.len() > target as usize + 1 {
            n_map.remove(rng.gen_range(0..n_map.len()));
        }
        if n_map.iter().enumerate().any(|(n, big)| *big < n as u32) {
            continue;
        }
        let systems = n_map.iter().enumerate().map(|(n, big)| random_system(n as u32, *big, &mut rng)).collect();
        return lift_system(systems, n_map, ambient).unwrap();
    }
}

fn criterion_1() -> Outcome {
    for seed in 0..20u64 {
        let sys = random_omega_system(seed);
        let (a, b) = build_ab_hat::<Rational>(&sys).map_err(|e| e.to_string())?;
        if !a.compose(&b).map_err(|e| e.to_string())?.is_identity() {
            return Ok((false, format!("seed {seed}: ÂB̂ differs from I (n_map {:?})", sys.n_map())));
        }
    }
    Ok((true, "ÂB̂ = I exactly for seeds 0..19".into()))
}

fn criterion_2() -> Outcome {
    let strat = ExpectationStrategy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_iso, mut worst_a) = (0.0f64, 0.0f64);
    for spec in spaces() {
        for v in 0..50u64 {
            let sys = random_omega_system(v);
            let (a, b) = build_ab_hat::<f64>(&sys).map_err(|e| e.to_string())?;
            let x = random_vector(sys.target_depth(), &mut rng);
            let rb = norm_ratio(&b, &x, &spec, &strat);
            worst_iso = worst_iso.max((rb - 1.0).abs());
            let y = random_vector(sys.ambient_n_max(), &mut rng);
            let ra = norm_ratio(&a, &y, &spec, &strat);
            worst_a = worst_a.max(ra);
        }
    }
    let ok = worst_iso <= 1e-9 && worst_a <= 1.0 + 1e-9;
    Ok((ok, format!("max |‖B̂x‖/‖x‖ - 1| = {worst_iso:.3e}, max ‖Âx‖/‖x‖ = {worst_a:.12}")))
}

/// A `δ`-large diagonal whose sign in each component is constant on the two
/// halves of `[0,1)` below the root, with both signs present.
fn mixed_diagonal(seed: u64, n_max: u32) -> OmegaOperator<Rational> {
    let left = DyadicInterval::new(1, 0).unwrap();
    let mut d = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..=n_max {
        let signs: [i64; 3] = [rng.gen_range(0..2) * 2 - 1, rng.gen_range(0..2) * 2 - 1, rng.gen_range(0..2) * 2 - 1];
        for i in DyadicInterval::up_to(n) {
            let s = if i.level() == 0 {
                signs[0]
            } else if left.contains(i) {
                signs[1]
            } else {
                signs[2]
            };
            d.push(q(s * rng.gen_range(4..=8), 8));
        }
    }
    d[0] = q(1, 2);
    d[1] = q(-1, 2);
    OmegaOperator::diagonal(n_max, &d).unwrap()
}

fn criterion_3() -> Outcome {
    let eta = 0.1;
    let strat = ExpectationStrategy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_b, mut worst_a, mut systems, mut depth) = (0.0f64, 0.0f64, 0, 0);
    for seed in 0..12u64 {
        let t = mixed_diagonal(seed, 4);
        let mut cfg = PipelineConfig::new(SpaceSpec::lp(2.0, RademacherMode::Constant).unwrap(), eta).unwrap();
        cfg.seed = seed;
        let pr = match reduce_positive_diagonal(&t, 0.5, &cfg) {
            Ok(pr) => pr,
            Err(e) => return Ok((false, format!("seed {seed}: selection failed: {e}"))),
        };
        if pr.route != "common-sign-systems" {
            return Ok((false, format!("seed {seed}: unexpected route {}", pr.route)));
        }
        // Undo the sign folded into A.
        let a = pr.a.scale(&Rational::from_i64(pr.sign as i64));
        if !a.compose(&pr.b).map_err(|e| e.to_string())?.is_identity() {
            return Ok((false, format!("seed {seed}: AB differs from I")));
        }
        let target = pr.b.domain_n_max();
        depth = depth.max(target);
        systems += 1;
        let (a, b) = (a.to_f64(), pr.b.to_f64());
        for spec in spaces() {
            for _ in 0..3 {
                worst_b = worst_b.max(norm_ratio(&b, &random_vector(target, &mut rng), &spec, &strat));
                worst_a = worst_a.max(norm_ratio(&a, &random_vector(4, &mut rng), &spec, &strat));
            }
        }
    }
    let ok = worst_b <= 1.0 + 1e-9 && worst_a <= (4.0 + eta) * (1.0 + 1e-9) && depth >= 1;
    Ok((ok, format!("{systems} systems up to target depth {depth}: max ‖Bx‖/‖x‖ = {worst_b:.12}, max ‖Ax‖/‖x‖ = {worst_a:.6}")))
}

/// Groups the atoms of `p` at random, giving a coarser partition.
fn coarsen(p: &Partition, rng: &mut ChaCha8Rng) -> Partition {
    let groups = rng.gen_range(1..=p.atoms().len());
    let mut atoms = vec![Vec::new(); groups];
    for a in p.atoms() {
        atoms[rng.gen_range(0..groups)].extend_from_slice(a);
    }
    Partition::new(p.resolution(), atoms).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let bases = [SpaceSpec::lp(1.0, RademacherMode::Constant).unwrap(), SpaceSpec::lp(2.0, RademacherMode::Constant).unwrap(), SpaceSpec::lp(4.0, RademacherMode::Constant).unwrap(), SpaceSpec::linf(RademacherMode::Constant)];
    for spec in &bases {
        for _ in 0..100 {
            let m = rng.gen_range(1..=7);
            let f = StepFunction::from_values(m, (0..1usize << m).map(|_| q(rng.gen_range(-16..=16), 8)).collect()).unwrap();
            let labels = rng.gen_range(1..=1usize << m);
            let mut atoms = vec![Vec::new(); labels];
            for c in 0..1u64 << m {
                atoms[rng.gen_range(0..labels)].push(c);
            }
            let p = Partition::new(m, atoms).unwrap();
            let e = conditional_expectation(&f, &p).map_err(|e| e.to_string())?;
            let (ne, nf) = (base_norm(&e, spec).value, base_norm(&f, spec).value);
            if ne > nf * (1.0 + 1e-12) {
                return Ok((false, format!("{spec}: ‖E f‖ = {ne} > ‖f‖ = {nf}")));
            }
            if nf > 0.0 {
                worst = worst.max(ne / nf);
            }
        }
    }
    let basis = OmegaBasis::packed(2).map_err(|e| e.to_string())?;
    let parts: Vec<Partition> = (0..=2).map(|n| basis.component_partition(n).unwrap()).collect();
    for trial in 0..100 {
        let x = OmegaCoefficients::from_vec(2, (0..universe_len(2)).map(|_| q(rng.gen_range(-9..=9), rng.gen_range(1..=6))).collect())
            .map_err(|e| e.to_string())?;
        let subs: Vec<Partition> = parts.iter().map(|p| coarsen(p, &mut rng)).collect();
        let s = component_condexp_sum(&x, &basis, &subs).map_err(|e| e.to_string())?;
        if !s.agree() {
            return Ok((false, format!("trial {trial}: the conditional expectation sum identity fails")));
        }
    }
    Ok((true, format!("max ‖Ef‖/‖f‖ = {worst:.12} over 400 pairs; sum identity exact on 100 tuples")))
}

fn criterion_5() -> Outcome {
    let eta = 0.1;
    let n_max = 4;
    let strat = ExpectationStrategy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_cert, mut worst_ratio) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let mut d = Vec::new();
        for n in 0..=n_max {
            let cap = eta / 8.0 * 0.25f64.powi(n as i32);
            for _ in DyadicInterval::up_to(n) {
                d.push(rng.gen_range(-cap..=cap));
            }
        }
        let op = OmegaOperator::diagonal(n_max, &d).map_err(|e| e.to_string())?;
        for spec in spaces() {
            worst_cert = worst_cert.max(certified_column_bound(&op, &spec));
            worst_ratio = worst_ratio.max(norm_ratio(&op, &random_vector(n_max, &mut rng), &spec, &strat));
        }
    }
    let mut worst_mult = 0.0f64;
    let params = GenParams::default();
    for seed in 0..50 {
        let p: OmegaOperator<f64> = generate_operator(OperatorKind::Multiplier, 3, seed, &params).map_err(|e| e.to_string())?;
        for spec in spaces() {
            worst_mult = worst_mult.max(norm_ratio(&p, &random_vector(3, &mut rng), &spec, &strat));
        }
    }
    let ok = worst_cert <= eta && worst_ratio <= eta * (1.0 + 1e-9) && worst_mult <= 1.0 + 1e-9;
    Ok((
        ok,
        format!("max certified {worst_cert:.4e}, max diagonal ratio {worst_ratio:.4e} (η = {eta}), max 0-1 ratio {worst_mult:.12}"),
    ))
}

/// The lexicographically first `(n + 1)`-subset anchored at its smallest
/// element, by exhaustive search.
fn brute_force(alpha: &[Rational], n: usize, eta: &Rational) -> Option<Vec<usize>> {
    let len = alpha.len();
    let mut best: Option<Vec<usize>> = None;
    for mask in 0u32..1 << len {
        if mask.count_ones() as usize != n + 1 {
            continue;
        }
        let set: Vec<usize> = (0..len).filter(|k| mask >> k & 1 == 1).collect();
        let ok = set.iter().all(|k| (alpha[*k].clone() - alpha[set[0]].clone()).abs() <= *eta);
        if ok && best.as_ref().is_none_or(|b| set < *b) {
            best = Some(set);
        }
    }
    best
}

fn criterion_6() -> Outcome {
    let eta = q(1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut feasible, mut infeasible) = (0, 0);
    for trial in 0..100 {
        let big = rng.gen_range(1..=5u32);
        let n = rng.gen_range(0..=2u32.min(big));
        let xi = q(rng.gen_range(0..=4), 32);
        // α_k ∈ [-Γ, Γ] with Γ = 1.
        let alpha: Vec<Rational> = (0..=big).map(|_| q(rng.gen_range(-16..=16), 16)).collect();
        let mut d = Vec::new();
        for k in 0..=big {
            for _ in DyadicInterval::generation(k) {
                let noise = xi.clone() * q(rng.gen_range(-8..=8), 8);
                d.push(alpha[k as usize].clone() + noise);
            }
        }
        let out = stabilize_component(&d, &alpha, n, &eta).map_err(|e| e.to_string())?;
        let oracle = brute_force(&alpha, n as usize, &eta);
        match (&out, &oracle) {
            (None, None) => infeasible += 1,
            (Some(s), Some(o)) => {
                let picked: Vec<usize> = s.frequencies.iter().map(|k| *k as usize).collect();
                if picked != *o || picked.len() != n as usize + 1 {
                    return Ok((false, format!("trial {trial}: picked {picked:?}, oracle {o:?}")));
                }
                if select_frequencies(&alpha, n as usize, &eta).as_ref() != Some(o) {
                    return Ok((false, format!("trial {trial}: select_frequencies disagrees with the oracle")));
                }
                let bound = eta.clone() + xi.clone();
                if let Some(p) = s.dhat.iter().position(|v| (v.clone() - s.c.clone()).abs() > bound) {
                    return Ok((false, format!("trial {trial}: |d̂ - c| exceeds η + ξ at position {p}")));
                }
                feasible += 1;
            }
            _ => return Ok((false, format!("trial {trial}: feasibility {} vs oracle {}", out.is_some(), oracle.is_some()))),
        }
    }
    Ok((true, format!("{feasible} feasible and {infeasible} infeasible cases agree with the oracle; |d̂ - c| ≤ η + ξ exactly")))
}

fn criterion_7() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for m in [6u32, 8, 10] {
        let t = SparseComponentOperator::random(m + 1, 70 + m as u64).map_err(|e| e.to_string())?;
        let rep = concentration_experiment(&t, 1, m, 2000, 7).map_err(|e| e.to_string())?;
        let worst_mean = rep.pairs.iter().map(|p| p.mean.abs() / p.mean_tolerance.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
        ok &= rep.passed();
        lines.push(format!(
            "m={m}: max var {:.3e} ≤ {:.3e}, max |mean|/tol {:.2}",
            rep.max_variance(),
            rep.variance_bound * rep.slack,
            worst_mean
        ));
    }
    Ok((ok, lines.join("; ")))
}

fn criterion_8() -> Outcome {
    let t: OmegaOperator<f64> = generate_operator(OperatorKind::Diagonal, 4, 11, &GenParams::default()).map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::new(SpaceSpec::lp(1.0, RademacherMode::Independent).unwrap(), 0.05).unwrap();
    cfg.delta = 0.6;
    cfg.mode = FactorMode::Auto;
    let cert = full_factor(&t, &cfg).map_err(|e| e.to_string())?;
    let rep = run_verify(&cert.to_json(), &AnyOperator::Float(t), 200);
    let resid = rep.max_identity_residual.unwrap_or(f64::INFINITY);
    let product = rep.norm_product_estimate.unwrap_or(f64::INFINITY);
    let ok = cert.branch == Branch::T && cert.c >= 0.55 && rep.passed() && resid <= 1e-6 && product <= 2.0;
    Ok((
        ok,
        format!(
            "branch {}, c = {}, target n_max {}, max |LTR - I| = {resid:.2e}, ‖L‖‖R‖ ≈ {product:.4}, bound {:.4}{}",
            cert.branch.as_str(),
            cert.c,
            cert.target_n_max(),
            cert.product_bound,
            rep.first_failure().map_or(String::new(), |c| format!(", failed clause {}", c.clause))
        ),
    ))
}

fn criterion_9() -> Outcome {
    let mut cfg = PipelineConfig::new(SpaceSpec::lp(2.0, RademacherMode::Independent).unwrap(), 0.1).unwrap();
    cfg.mode = FactorMode::Primary;
    cfg.norm_sampler.trials = 8;
    let mut parts = Vec::new();
    for (name, t, want) in [
        ("T = 0", OmegaOperator::<Rational>::zeros(3, 3), Branch::IMinusT),
        ("T = I", OmegaOperator::<Rational>::identity(3), Branch::T),
    ] {
        let cert = full_factor(&t, &cfg).map_err(|e| e.to_string())?;
        let rep = run_verify(&cert.to_json(), &AnyOperator::Rational(t), 20);
        let good = cert.branch == want && cert.c == Rational::from_i64(1) && cert.chain_error == 0.0 && cert.residual == 0.0 && rep.passed();
        if !good {
            return Ok((false, format!("{name}: branch {}, c = {}, error {}", cert.branch.as_str(), cert.c, cert.chain_error)));
        }
        parts.push(format!("{name} through {} with c = 1, error 0", cert.branch.as_str()));
    }
    Ok((true, parts.join("; ")))
}

fn first_entry(m: &mut Value) -> &mut Value {
    let col = m["columns"].as_object_mut().and_then(|c| c.values_mut().next()).expect("a nonzero column");
    col.as_object_mut().and_then(|c| c.values_mut().next()).expect("a nonzero entry")
}

fn criterion_10() -> Outcome {
    let t: OmegaOperator<Rational> = generate_operator(OperatorKind::Diagonal, 3, 3, &GenParams::default()).map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::new(SpaceSpec::lp(1.0, RademacherMode::Independent).unwrap(), 0.05).unwrap();
    cfg.norm_sampler.trials = 4;
    let cert = full_factor(&t, &cfg).map_err(|e| e.to_string())?.to_json();
    let op = AnyOperator::Rational(t);
    if !run_verify(&cert, &op, 10).passed() {
        return Ok((false, "the untouched certificate does not verify".into()));
    }
    let bump = |v: &mut Value| *v = Value::String("12345/7".into());
    let mutations: Vec<Mutation> = vec![
        ("c", Box::new(|c: &mut Value| c["c"] = Value::String("1/3".into()))),
        ("operator digest", Box::new(|c: &mut Value| c["operator_digest"] = Value::String("0".repeat(64)))),
        ("stage input digest", Box::new(|c: &mut Value| c["stages"][1]["input_digest"] = Value::String("f".repeat(64)))),
        ("L entry", Box::new(move |c: &mut Value| bump(first_entry(&mut c["L"])))),
        ("R entry", Box::new(move |c: &mut Value| bump(first_entry(&mut c["R"])))),
        ("A entry", Box::new(move |c: &mut Value| bump(first_entry(&mut c["A"])))),
        ("B entry", Box::new(move |c: &mut Value| bump(first_entry(&mut c["B"])))),
        ("stage output entry", Box::new(move |c: &mut Value| bump(first_entry(&mut c["stages"][0]["output"])))),
        ("chain error", Box::new(|c: &mut Value| c["chain"]["error"] = serde_json::json!(1e-3))),
        ("product bound", Box::new(|c: &mut Value| c["endgame"]["product_bound"] = serde_json::json!(0.5))),
    ];
    let mut caught = Vec::new();
    for (name, mutate) in &mutations {
        let mut bad = cert.clone();
        mutate(&mut bad);
        if bad == cert {
            return Ok((false, format!("mutation {name} left the certificate unchanged")));
        }
        let rep = run_verify(&bad, &op, 10);
        match rep.first_failure() {
            Some(c) => caught.push(format!("{name} → {}", c.clause)),
            None => return Ok((false, format!("mutation {name} was not detected"))),
        }
    }
    Ok((true, format!("{} of {} mutations rejected ({})", caught.len(), mutations.len(), caught.join(", "))))
}

fn formulas_check() -> Outcome {
    let got = (
        n0(2, 1.0, 0.5).map_err(|e| e.to_string())?,
        n1(3, 1.0, 0.25).map_err(|e| e.to_string())?,
        n2(2, 0.5).map_err(|e| e.to_string())?,
    );
    let want = (BigInt::from(67), BigInt::from(25), BigInt::from(80));
    Ok((got == want, format!("N0(2,1,0.5) = {}, N1(3,1,0.25) = {}, N2(2,0.5) = {}", got.0, got.1, got.2)))
}

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("1", "exact factor identity", 60, criterion_1),
        ("2", "isometry and contraction", 300, criterion_2),
        ("3", "almost faithful bounds", 300, criterion_3),
        ("4", "conditional expectation laws", 120, criterion_4),
        ("5", "diagonal and 0-1 multiplier bounds", 180, criterion_5),
        ("6", "pigeonhole stabilization", 120, criterion_6),
        ("7", "concentration diagnostics", 600, criterion_7),
        ("8", "end-to-end large diagonal", 900, criterion_8),
        ("9", "primary branch logic", 60, criterion_9),
        ("10", "certificate independence", 60, criterion_10),
        ("formulas", "sufficient depths", 10, formulas_check),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && in_time, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        let timing = if in_time { format!("{:.1}s", elapsed.as_secs_f64()) } else { format!("{:.1}s over the {limit}s limit", elapsed.as_secs_f64()) };
        println!("{} criterion {id} ({name}, {timing}): {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
