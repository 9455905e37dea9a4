//! Timing and accuracy tables. Wall times vary between runs; every other
//! column is a deterministic function of the seed.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generate::{generate_operator, GenParams, OperatorKind};
use crate::norm::{hardy_norm, ExpectationStrategy, RademacherMode, SpaceSpec};
use crate::pipeline::{full_factor, PipelineConfig};
use crate::step::HaarCoefficients;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchSuite {
    /// Exact Hardy norms at growing resolution.
    Norm,
    /// Exact against Monte Carlo sign expectations.
    MonteCarlo,
    /// Full factorizations of generated operators.
    Pipeline,
}

impl fmt::Display for BenchSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchSuite::Norm => "norm",
            BenchSuite::MonteCarlo => "mc",
            BenchSuite::Pipeline => "pipeline",
        })
    }
}

impl FromStr for BenchSuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm" => Ok(BenchSuite::Norm),
            "mc" => Ok(BenchSuite::MonteCarlo),
            "pipeline" => Ok(BenchSuite::Pipeline),
            other => Err(Error::Parse(format!("unknown bench suite {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchBudget {
    /// Largest step-function resolution `M` in the norm suite.
    pub max_resolution: u32,
    /// Largest `n_max` in the pipeline suite.
    pub max_n_max: u32,
    /// Rows of the Monte Carlo comparison.
    pub mc_cases: usize,
    pub mc_samples: u64,
}

impl Default for BenchBudget {
    fn default() -> Self {
        BenchBudget { max_resolution: 14, max_n_max: 4, mc_cases: 40, mc_samples: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub suite: String,
    pub case: String,
    pub n_max: Option<u32>,
    pub resolution: Option<u32>,
    pub mode: String,
    pub wall_ms: f64,
    pub value: f64,
    pub reference: Option<f64>,
    pub abs_error: Option<f64>,
    pub stat_error: Option<f64>,
    pub ok: Option<bool>,
}

fn random_coefficients(depth: u32, rng: &mut ChaCha8Rng) -> Result<HaarCoefficients<f64>> {
    let dense: Vec<f64> = (0..1usize << (depth + 1)).map(|i| if i == 0 { 0.0 } else { rng.gen_range(-1.0..=1.0) }).collect();
    HaarCoefficients::from_dense(depth, false, &dense)
}

pub fn run_bench(suite: BenchSuite, budget: &BenchBudget, seed: u64) -> Result<Vec<BenchRow>> {
    match suite {
        BenchSuite::Norm => norm_suite(budget, seed),
        BenchSuite::MonteCarlo => mc_suite(budget, seed),
        BenchSuite::Pipeline => pipeline_suite(budget, seed),
    }
}

fn norm_suite(budget: &BenchBudget, seed: u64) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in 10..=budget.max_resolution.max(10) {
        let c = random_coefficients(m - 1, &mut rng)?;
        for mode in [RademacherMode::Constant, RademacherMode::Independent] {
            let spec = SpaceSpec::lp(2.0, mode)?;
            let start = Instant::now();
            let r = hardy_norm(&c, &spec, &ExpectationStrategy::default())?;
            rows.push(BenchRow {
                suite: "norm".into(),
                case: spec.to_string(),
                n_max: None,
                resolution: Some(m),
                mode: format!("{:?}", r.method),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                value: r.value,
                reference: None,
                abs_error: None,
                stat_error: Some(r.stat_error),
                ok: None,
            });
        }
    }
    Ok(rows)
}

fn mc_suite(budget: &BenchBudget, seed: u64) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for case in 0..budget.mc_cases {
        let depth = 3 + (case % 4) as u32;
        let c = random_coefficients(depth, &mut rng)?;
        let p = [1.0, 2.0, 3.0][case % 3];
        let spec = SpaceSpec::lp(p, RademacherMode::Independent)?;
        let exact = hardy_norm(&c, &spec, &ExpectationStrategy::default())?;
        let start = Instant::now();
        let mc = hardy_norm(&c, &spec, &ExpectationStrategy::new(0, budget.mc_samples, seed.wrapping_add(case as u64))?)?;
        let err = (mc.value - exact.value).abs();
        rows.push(BenchRow {
            suite: "mc".into(),
            case: format!("{spec} depth {depth} #{case}"),
            n_max: None,
            resolution: Some(depth + 1),
            mode: "monte-carlo".into(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            value: mc.value,
            reference: Some(exact.value),
            abs_error: Some(err),
            stat_error: Some(mc.stat_error),
            ok: Some(err <= 4.0 * mc.stat_error),
        });
    }
    Ok(rows)
}

fn pipeline_suite(budget: &BenchBudget, seed: u64) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    let params = GenParams { gamma: 0.1, ..GenParams::default() };
    for n_max in 1..=budget.max_n_max {
        for kind in [OperatorKind::Identity, OperatorKind::Diagonal, OperatorKind::PerturbedIdentity] {
            let t = generate_operator::<f64>(kind, n_max, seed, &params)?;
            let mut cfg = PipelineConfig::new(SpaceSpec::lp(1.0, RademacherMode::Independent)?, 0.05)?;
            cfg.seed = seed;
            cfg.norm_sampler.trials = 4;
            let start = Instant::now();
            let out = full_factor(&t, &cfg);
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let (value, reference, ok, mode) = match &out {
                Ok(c) => (c.residual, Some(c.chain_error), Some(true), format!("{} c={} target={}", c.branch.as_str(), c.c, c.target_n_max())),
                Err(e) => (f64::NAN, None, Some(false), format!("failed: {e}")),
            };
            rows.push(BenchRow {
                suite: "pipeline".into(),
                case: kind.to_string(),
                n_max: Some(n_max),
                resolution: None,
                mode,
                wall_ms,
                value,
                reference,
                abs_error: None,
                stat_error: None,
                ok,
            });
        }
    }
    Ok(rows)
}
