//! Independent re-check of a factorization certificate against an operator
//! file. Nothing is taken from the certificate on trust: every bound is
//! recomputed from the serialized matrices.

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::norm::{certified_column_bound, operator_norm_lower, NormSampler};
use crate::operator::{AnyOperator, OmegaOperator};
use crate::pipeline::{chain_totals, neumann_bound, Branch, FactorizationCertificate};
use crate::scalar::{NumericMode, Scalar};

/// Basis-vector tolerance for `L T' R − I` in float mode.
pub const FLOAT_IDENTITY_TOLERANCE: f64 = 1e-6;
/// Relative slack for recomputed floating bounds.
const REL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub clause: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    /// `max_j ‖(L T' R − I) e_j‖_∞`.
    pub max_identity_residual: Option<f64>,
    /// Sampled `‖L‖·‖R‖`.
    pub norm_product_estimate: Option<f64>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }

    fn push(&mut self, clause: &str, passed: bool, detail: impl Into<String>) -> bool {
        self.checks.push(Check { clause: clause.into(), passed, detail: detail.into() });
        passed
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= REL * a.abs().max(b.abs())
}

fn max_deviation<S: Scalar>(x: &OmegaOperator<S>, y: &OmegaOperator<S>) -> Option<f64> {
    let d = x.sub(y).ok()?;
    Some(d.matrix().max_abs())
}

fn equal_ops<S: Scalar>(x: &OmegaOperator<S>, y: &OmegaOperator<S>) -> bool {
    match S::MODE {
        NumericMode::Rational => x == y,
        NumericMode::Float => {
            x.domain_n_max() == y.domain_n_max()
                && x.codomain_n_max() == y.codomain_n_max()
                && max_deviation(x, y).is_some_and(|d| d <= REL * x.matrix().max_abs().max(1.0))
        }
    }
}

/// Verifies a certificate given as JSON against the operator it claims to
/// factor. `samples` random vectors feed the `‖L‖‖R‖` estimate.
pub fn run_verify(cert: &Value, op: &AnyOperator, samples: usize) -> VerifyReport {
    match op {
        AnyOperator::Rational(t) => verify_typed(cert, t, &op.digest(), samples),
        AnyOperator::Float(t) => verify_typed(cert, t, &op.digest(), samples),
    }
}

fn verify_typed<S: Scalar>(cert: &Value, t: &OmegaOperator<S>, digest: &str, samples: usize) -> VerifyReport {
    let mut rep = VerifyReport::default();
    let parsed = FactorizationCertificate::<S>::from_json(cert);
    let cert = match parsed {
        Ok(c) => c,
        Err(e) => {
            rep.push("parse", false, e.to_string());
            return rep;
        }
    };
    rep.push("parse", true, "certificate parsed");
    if let Err(e) = checks(&mut rep, &cert, t, digest, samples) {
        rep.push("arithmetic", false, e.to_string());
    }
    rep
}

fn checks<S: Scalar>(
    rep: &mut VerifyReport,
    cert: &FactorizationCertificate<S>,
    t: &OmegaOperator<S>,
    digest: &str,
    samples: usize,
) -> Result<()> {
    let spec = &cert.space;
    let ok = cert.operator_digest == digest;
    rep.push(
        "operator digest",
        ok,
        if ok { "matches".to_string() } else { format!("digest mismatch: {} vs {digest}", cert.operator_digest) },
    );
    if cert.stages.is_empty() {
        rep.push("stages", false, "empty stage chain");
        return Ok(());
    }

    // The chain.
    let mut input = t.clone();
    for (k, st) in cert.stages.iter().enumerate() {
        let name = format!("stage {k} ({})", st.stage);
        let d_ok = st.input_digest == input.digest();
        rep.push(&format!("{name} input digest"), d_ok, if d_ok { "matches" } else { "digest mismatch" });
        let recomputed = match st.a.compose(&input).and_then(|x| x.compose(&st.b)).and_then(|s| s.sub(&st.output)) {
            Ok(diff) => certified_column_bound(&diff, spec),
            Err(e) => {
                rep.push(&format!("{name} residual"), false, e.to_string());
                return Ok(());
            }
        };
        rep.push(
            &format!("{name} residual"),
            close(recomputed, st.certified) && recomputed <= st.claimed * (1.0 + REL),
            format!("recomputed {recomputed:e}, recorded {:e}, claimed {:e}", st.certified, st.claimed),
        );
        if st.projectional {
            let ab = st.a.compose(&st.b)?;
            let p_ok = equal_ops(&ab, &OmegaOperator::identity(ab.domain_n_max()));
            rep.push(&format!("{name} AB = I"), p_ok, if p_ok { "holds" } else { "AB differs from I" });
            let lhs = st.a.compose(&OmegaOperator::identity(input.domain_n_max()).sub(&input)?)?.compose(&st.b)?;
            let rhs = OmegaOperator::identity(ab.domain_n_max()).sub(&st.a.compose(&input)?.compose(&st.b)?)?;
            let c_ok = equal_ops(&lhs, &rhs);
            rep.push(&format!("{name} complement"), c_ok, if c_ok { "A(I-X)B = I - AXB" } else { "complement identity fails" });
        }
        input = st.output.clone();
    }

    // Composite factors.
    let mut a = cert.stages[0].a.clone();
    let mut b = cert.stages[0].b.clone();
    for st in &cert.stages[1..] {
        a = st.a.compose(&a)?;
        b = b.compose(&st.b)?;
    }
    rep.push("composite A", equal_ops(&a, &cert.a), "A = A_K ⋯ A_1");
    rep.push("composite B", equal_ops(&b, &cert.b), "B = B_1 ⋯ B_K");

    // Chain arithmetic.
    let links: Vec<(f64, f64)> = cert.stages.iter().map(|s| (s.constant, s.certified)).collect();
    let claims: Vec<(f64, f64)> = cert.stages.iter().map(|s| (s.constant, s.claimed)).collect();
    let (constant, error) = chain_totals(&links);
    let (_, claimed) = chain_totals(&claims);
    rep.push(
        "chain arithmetic",
        close(constant, cert.chain_constant) && close(error, cert.chain_error) && close(claimed, cert.chain_claimed),
        format!("constant {constant}, error {error:e}, claimed {claimed:e}"),
    );

    // The scalar.
    let last = &cert.stages.last().expect("nonempty").output;
    let n_t = last.domain_n_max();
    let c_last = last.coefficient(
        crate::dyadic::OmegaIndex::new(0, crate::dyadic::DyadicInterval::UNIT)?,
        crate::dyadic::OmegaIndex::new(0, crate::dyadic::DyadicInterval::UNIT)?,
    );
    let scalar_ok = *last == OmegaOperator::scalar(n_t, c_last.clone())
        && match cert.branch {
            Branch::T => cert.c == c_last,
            Branch::IMinusT => cert.c == S::one() - c_last.clone(),
        };
    rep.push(
        "scalar",
        scalar_ok,
        if scalar_ok { format!("c = {}", cert.c.to_f64()) } else { format!("scalar mismatch: c = {}, chain ends at {}", cert.c.to_f64(), c_last.to_f64()) },
    );
    if cert.branch == Branch::IMinusT {
        let all = cert.stages.iter().all(|s| s.projectional);
        rep.push("branch", all, if all { "I-T with projectional stages" } else { "I-T needs projectional stages" });
    }

    // Endgame.
    let n_in = t.domain_n_max();
    let t_prime = match cert.branch {
        Branch::T => t.clone(),
        Branch::IMinusT => OmegaOperator::identity(n_in).sub(t)?,
    };
    let s_op = cert.a.compose(&t_prime)?.compose(&cert.b)?;
    let residual = certified_column_bound(&s_op.sub(&OmegaOperator::scalar(s_op.domain_n_max(), cert.c.clone()))?, spec);
    let neumann = neumann_bound(cert.c.to_f64(), residual);
    let end_ok = close(residual, cert.residual)
        && neumann.is_some_and(|nb| {
            close(nb, cert.neumann_bound) && close(cert.chain_constant * nb / cert.c.to_f64().abs(), cert.product_bound)
        });
    rep.push(
        "endgame bounds",
        end_ok,
        format!("residual {residual:e}, Neumann {:?}, recorded product bound {}", neumann, cert.product_bound),
    );
    let inv_c = S::one() / cert.c.clone();
    let l_expected = s_op.scale(&inv_c).matrix().solve(cert.a.scale(&inv_c).matrix())?;
    let l_expected = OmegaOperator::new(cert.a.domain_n_max(), s_op.domain_n_max(), l_expected)?;
    rep.push("L", equal_ops(&l_expected, &cert.l), "L = (c⁻¹AT'B)⁻¹c⁻¹A");
    rep.push("R", cert.r == cert.b, "R = B");

    // L T' R on every basis vector.
    let ltr = cert.l.compose(&t_prime)?.compose(&cert.r)?;
    let id = OmegaOperator::identity(ltr.domain_n_max());
    let worst = max_deviation(&ltr, &id).unwrap_or(f64::INFINITY);
    rep.max_identity_residual = Some(worst);
    let id_ok = match S::MODE {
        NumericMode::Rational => ltr == id,
        NumericMode::Float => worst <= FLOAT_IDENTITY_TOLERANCE,
    };
    rep.push("LT'R = I", id_ok, format!("max basis-vector residual {worst:e}"));

    // Sampled norms.
    let sampler = NormSampler::new(0x5eed, samples);
    let product = operator_norm_lower(&cert.l, spec, &sampler) * operator_norm_lower(&cert.r, spec, &sampler);
    rep.norm_product_estimate = Some(product);
    rep.push(
        "norm product",
        product <= cert.product_bound * (1.0 + REL),
        format!("sampled ‖L‖‖R‖ {product}, bound {}", cert.product_bound),
    );
    Ok(())
}
