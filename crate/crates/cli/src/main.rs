use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use haarfact::bench::{run_bench, BenchBudget, BenchSuite};
use haarfact::generate::{generate_operator, parse_value, GenParams, OperatorKind};
use haarfact::norm::{omega_norm, ExpectationStrategy, SpaceSpec};
use haarfact::omega::OmegaCoefficients;
use haarfact::operator::{AnyOperator, OmegaOperator};
use haarfact::pipeline::{formulas, full_factor, FactorMode, PipelineConfig};
use haarfact::scalar::{NumericMode, Rational, Scalar};
use haarfact::verify::run_verify;

const EXIT_FAILURE: u8 = 1;
const EXIT_STAGE: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(name = "haarfact", version, about = "Factorization certificates for operators on independent sums of Haar system Hardy spaces")]
struct Cli {
    /// Worker threads for the numeric kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated operator file.
    Gen(GenArgs),
    /// Factor an operator and write its certificate.
    Factor(FactorArgs),
    /// Re-check a certificate against an operator file.
    Verify(VerifyArgs),
    /// Norm of a coefficient vector.
    Norm(NormArgs),
    /// Evaluate the sufficient depths N0, N1, N2.
    Formulas(FormulasArgs),
    /// Timing and accuracy tables.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// identity, diagonal, multiplier, random or perturbed-identity.
    #[arg(long)]
    kind: OperatorKind,
    #[arg(long = "nmax")]
    n_max: u32,
    #[arg(long, env = "HAARFACT_SEED", default_value_t = 0)]
    seed: u64,
    /// rational or float entries.
    #[arg(long = "numeric", default_value = "float")]
    numeric: String,
    /// Comma-separated values for the diagonal kind, e.g. 0.6,0.8 or 3/5,4/5.
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.8")]
    values: Vec<String>,
    /// Certified bound of the random part.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Space in which gamma is certified.
    #[arg(long, default_value = "lp:2:constant")]
    space: SpaceSpec,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FactorArgs {
    #[arg(long)]
    op: PathBuf,
    #[arg(long, default_value = "lp:2:independent")]
    space: SpaceSpec,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    /// 0 lets the auto mode use the smallest diagonal entry.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// auto, primary or large-diagonal.
    #[arg(long, default_value = "auto")]
    mode: FactorMode,
    #[arg(long, env = "HAARFACT_SEED", default_value_t = 0)]
    seed: u64,
    /// Sign draws per component and depth.
    #[arg(long, default_value_t = 10_000)]
    max_samples: usize,
    /// Extra draws kept only for the concentration statistics.
    #[arg(long, default_value_t = 0)]
    diagnostic_draws: usize,
    /// Random vectors for the sampled norm estimates.
    #[arg(long, default_value_t = 16)]
    norm_samples: usize,
    /// Emit the certificate even when a stage misses its claimed bound.
    #[arg(long)]
    allow_degraded: bool,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    cert: PathBuf,
    #[arg(long)]
    op: PathBuf,
    /// Random vectors for the sampled norm check.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Args)]
struct NormArgs {
    #[arg(long)]
    space: SpaceSpec,
    #[arg(long = "vec")]
    vector: PathBuf,
    /// Chains with at most this many active signs are evaluated exactly.
    #[arg(long, default_value_t = 20)]
    exact_cutoff: u32,
    #[arg(long, default_value_t = 4096)]
    mc_samples: u64,
    #[arg(long, env = "HAARFACT_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FormulasArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    eta: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// norm, mc or pipeline.
    #[arg(long)]
    suite: BenchSuite,
    #[arg(long, default_value_t = 14)]
    max_resolution: u32,
    #[arg(long, default_value_t = 4)]
    max_nmax: u32,
    #[arg(long, default_value_t = 40)]
    mc_cases: usize,
    #[arg(long, default_value_t = 20_000)]
    mc_samples: u64,
    #[arg(long, env = "HAARFACT_SEED", default_value_t = 1)]
    seed: u64,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn gen(args: &GenArgs) -> Result<ExitCode> {
    let values = args.values.iter().map(|s| parse_value(s)).collect::<haarfact::error::Result<Vec<Rational>>>()?;
    let params = GenParams { values, gamma: args.gamma, space: args.space };
    let json = match NumericMode::parse(&args.numeric)? {
        NumericMode::Rational => generate_operator::<Rational>(args.kind, args.n_max, args.seed, &params)?.to_json(),
        NumericMode::Float => generate_operator::<f64>(args.kind, args.n_max, args.seed, &params)?.to_json(),
    };
    emit(args.output.as_deref(), &pretty(&json)?)?;
    Ok(ExitCode::SUCCESS)
}

fn factor_typed<S: Scalar>(t: &OmegaOperator<S>, cfg: &PipelineConfig, output: Option<&Path>) -> Result<ExitCode> {
    match full_factor(t, cfg) {
        Ok(cert) => {
            emit(output, &pretty(&cert.to_json())?)?;
            eprintln!(
                "branch {}, c = {}, target n_max {}, product bound {:.6}",
                cert.branch.as_str(),
                cert.c.to_f64(),
                cert.target_n_max(),
                cert.product_bound
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("stage failure: {e}");
            Ok(ExitCode::from(EXIT_STAGE))
        }
    }
}

fn factor(args: &FactorArgs) -> Result<ExitCode> {
    let op = AnyOperator::from_json(&read_json(&args.op)?)?;
    let mut cfg = PipelineConfig::new(args.space, args.eta)?;
    cfg.delta = args.delta;
    cfg.mode = args.mode;
    cfg.seed = args.seed;
    cfg.max_samples = args.max_samples;
    cfg.diagnostic_draws = args.diagnostic_draws;
    cfg.allow_degraded = args.allow_degraded;
    cfg.norm_sampler.seed = args.seed;
    cfg.norm_sampler.trials = args.norm_samples;
    cfg.validate()?;
    match &op {
        AnyOperator::Rational(t) => factor_typed(t, &cfg, args.output.as_deref()),
        AnyOperator::Float(t) => factor_typed(t, &cfg, args.output.as_deref()),
    }
}

fn verify(args: &VerifyArgs) -> Result<ExitCode> {
    let cert = read_json(&args.cert)?;
    let op = AnyOperator::from_json(&read_json(&args.op)?)?;
    let report = run_verify(&cert, &op, args.samples);
    emit(None, &pretty(&serde_json::to_value(&report)?)?)?;
    match report.first_failure() {
        None => Ok(ExitCode::SUCCESS),
        Some(c) => {
            eprintln!("verification failed at {}: {}", c.clause, c.detail);
            Ok(ExitCode::from(EXIT_MISMATCH))
        }
    }
}

fn norm(args: &NormArgs) -> Result<ExitCode> {
    let v = read_json(&args.vector)?;
    let strat = ExpectationStrategy::new(args.exact_cutoff, args.mc_samples, args.seed)?;
    let result = match NumericMode::parse(v["mode"].as_str().unwrap_or("float"))? {
        NumericMode::Rational => omega_norm(&OmegaCoefficients::<Rational>::from_json(&v)?, &args.space, &strat),
        NumericMode::Float => omega_norm(&OmegaCoefficients::<f64>::from_json(&v)?, &args.space, &strat),
    };
    let out = json!({ "space": args.space.to_string(), "norm": serde_json::to_value(&result)? });
    emit(None, &pretty(&out)?)?;
    Ok(ExitCode::SUCCESS)
}

fn formulas_cmd(args: &FormulasArgs) -> Result<ExitCode> {
    let f = formulas(args.n, args.gamma, args.eta)?;
    emit(None, &pretty(&f.to_json())?)?;
    Ok(ExitCode::SUCCESS)
}

fn bench(args: &BenchArgs) -> Result<ExitCode> {
    let budget = BenchBudget {
        max_resolution: args.max_resolution,
        max_n_max: args.max_nmax,
        mc_cases: args.mc_cases,
        mc_samples: args.mc_samples,
    };
    let rows = run_bench(args.suite, &budget, args.seed)?;
    let text = match args.format.as_str() {
        "json" => pretty(&serde_json::to_value(&rows)?)?,
        "csv" => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)?;
            }
            String::from_utf8(w.into_inner()?)?
        }
        other => bail!("unknown format {other:?}"),
    };
    emit(args.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Factor(a) => factor(a),
        Command::Verify(a) => verify(a),
        Command::Norm(a) => norm(a),
        Command::Formulas(a) => formulas_cmd(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_FAILURE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
