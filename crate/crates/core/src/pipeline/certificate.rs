use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::norm::SpaceSpec;
use crate::operator::OmegaOperator;
use crate::scalar::Scalar;

pub const CERTIFICATE_FORMAT: &str = "haarfact-certificate/1";

/// One link `X_k ≈ A_k X_{k-1} B_k` of the chain.
#[derive(Clone, Debug, PartialEq)]
pub struct StageCertificate<S> {
    pub stage: String,
    /// Digest of `X_{k-1}`.
    pub input_digest: String,
    pub a: OmegaOperator<S>,
    pub b: OmegaOperator<S>,
    /// `X_k`.
    pub output: OmegaOperator<S>,
    /// Bound for `‖A_k‖‖B_k‖`.
    pub constant: f64,
    pub claimed: f64,
    /// `certified_column_bound(A_k X_{k-1} B_k − X_k)`.
    pub certified: f64,
    /// Whether `A_k B_k = I`.
    pub projectional: bool,
    pub details: Value,
}

impl<S: Scalar> StageCertificate<S> {
    pub fn to_json(&self) -> Value {
        json!({
            "stage": self.stage,
            "input_digest": self.input_digest,
            "A": self.a.to_json(),
            "B": self.b.to_json(),
            "output": self.output.to_json(),
            "constant": self.constant,
            "claimed": self.claimed,
            "certified": self.certified,
            "projectional": self.projectional,
            "details": self.details,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        Ok(StageCertificate {
            stage: str_field(v, "stage")?.to_string(),
            input_digest: str_field(v, "input_digest")?.to_string(),
            a: OmegaOperator::from_json(&v["A"])?,
            b: OmegaOperator::from_json(&v["B"])?,
            output: OmegaOperator::from_json(&v["output"])?,
            constant: f64_field(v, "constant")?,
            claimed: f64_field(v, "claimed")?,
            certified: f64_field(v, "certified")?,
            projectional: v["projectional"].as_bool().ok_or_else(|| missing("projectional"))?,
            details: v.get("details").cloned().unwrap_or(Value::Null),
        })
    }
}

/// Constant and error of the composed chain: if `X_k` factors through
/// `X_{k-1}` with `(C_k, η_k)`, the last operator factors through the first
/// with `Π C_k` and `Σ_k (Π_{j>k} C_j) η_k`.
pub fn chain_totals(links: &[(f64, f64)]) -> (f64, f64) {
    let mut constant = 1.0;
    let mut error = 0.0;
    for (c, eta) in links.iter().rev() {
        error += constant * eta;
        constant *= c;
    }
    (constant, error)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    T,
    IMinusT,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::T => "T",
            Branch::IMinusT => "I-T",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "T" => Ok(Branch::T),
            "I-T" => Ok(Branch::IMinusT),
            other => Err(Error::Parse(format!("unknown branch {other:?}"))),
        }
    }
}

/// Everything needed to re-check `L T' R = I` with `T' = T` or `I − T`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizationCertificate<S> {
    pub operator_digest: String,
    pub space: SpaceSpec,
    pub config: Value,
    pub branch: Branch,
    pub c: S,
    pub delta: f64,
    pub stages: Vec<StageCertificate<S>>,
    /// Composite `A = A_K ⋯ A_1`.
    pub a: OmegaOperator<S>,
    /// Composite `B = B_1 ⋯ B_K`.
    pub b: OmegaOperator<S>,
    pub l: OmegaOperator<S>,
    pub r: OmegaOperator<S>,
    pub chain_constant: f64,
    pub chain_error: f64,
    pub chain_claimed: f64,
    /// `certified_column_bound(A T' B − cI)`.
    pub residual: f64,
    /// Bound for `‖(c⁻¹ A T' B)⁻¹‖`.
    pub neumann_bound: f64,
    /// Bound for `‖L‖‖R‖`.
    pub product_bound: f64,
    pub norm_estimates: (f64, f64),
    pub targets: Value,
    pub formulas: Value,
}

impl<S: Scalar> FactorizationCertificate<S> {
    pub fn target_n_max(&self) -> u32 {
        self.l.codomain_n_max()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "format": CERTIFICATE_FORMAT,
            "mode": S::MODE.as_str(),
            "operator_digest": self.operator_digest,
            "space": self.space.to_string(),
            "config": self.config,
            "branch": self.branch.as_str(),
            "c": self.c.to_json(),
            "delta": self.delta,
            "target_n_max": self.target_n_max(),
            "stages": self.stages.iter().map(StageCertificate::to_json).collect::<Vec<_>>(),
            "A": self.a.to_json(),
            "B": self.b.to_json(),
            "L": self.l.to_json(),
            "R": self.r.to_json(),
            "chain": {
                "constant": self.chain_constant,
                "error": self.chain_error,
                "claimed_error": self.chain_claimed,
            },
            "endgame": {
                "residual": self.residual,
                "neumann_bound": self.neumann_bound,
                "product_bound": self.product_bound,
            },
            "norm_estimates": {
                "L": self.norm_estimates.0,
                "R": self.norm_estimates.1,
                "product": self.norm_estimates.0 * self.norm_estimates.1,
            },
            "targets": self.targets,
            "formulas": self.formulas,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        if v["format"].as_str() != Some(CERTIFICATE_FORMAT) {
            return Err(Error::Parse(format!("unknown certificate format {}", v["format"])));
        }
        let mode = str_field(v, "mode")?;
        if mode != S::MODE.as_str() {
            return Err(Error::ModeMismatch { expected: S::MODE.as_str(), found: mode.to_string() });
        }
        let stages = v["stages"]
            .as_array()
            .ok_or_else(|| missing("stages"))?
            .iter()
            .map(StageCertificate::from_json)
            .collect::<Result<Vec<_>>>()?;
        Ok(FactorizationCertificate {
            operator_digest: str_field(v, "operator_digest")?.to_string(),
            space: str_field(v, "space")?.parse()?,
            config: v["config"].clone(),
            branch: Branch::parse(str_field(v, "branch")?)?,
            c: S::from_json(&v["c"])?,
            delta: f64_field(v, "delta")?,
            stages,
            a: OmegaOperator::from_json(&v["A"])?,
            b: OmegaOperator::from_json(&v["B"])?,
            l: OmegaOperator::from_json(&v["L"])?,
            r: OmegaOperator::from_json(&v["R"])?,
            chain_constant: f64_field(&v["chain"], "constant")?,
            chain_error: f64_field(&v["chain"], "error")?,
            chain_claimed: f64_field(&v["chain"], "claimed_error")?,
            residual: f64_field(&v["endgame"], "residual")?,
            neumann_bound: f64_field(&v["endgame"], "neumann_bound")?,
            product_bound: f64_field(&v["endgame"], "product_bound")?,
            norm_estimates: (f64_field(&v["norm_estimates"], "L")?, f64_field(&v["norm_estimates"], "R")?),
            targets: v["targets"].clone(),
            formulas: v["formulas"].clone(),
        })
    }
}

fn missing(field: &str) -> Error {
    Error::Parse(format!("certificate field {field:?} is missing or malformed"))
}

pub(crate) fn str_field<'a>(v: &'a Value, field: &str) -> Result<&'a str> {
    v[field].as_str().ok_or_else(|| missing(field))
}

pub(crate) fn f64_field(v: &Value, field: &str) -> Result<f64> {
    v[field].as_f64().ok_or_else(|| missing(field))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_arithmetic() {
        assert_eq!(chain_totals(&[]), (1.0, 0.0));
        assert_eq!(chain_totals(&[(2.0, 0.5)]), (2.0, 0.5));
        // X2 through X1 with (C2, η2) and X1 through T with (C1, η1):
        // constant C1·C2 and error η2 + C2·η1.
        assert_eq!(chain_totals(&[(3.0, 0.25), (2.0, 0.125)]), (6.0, 0.125 + 2.0 * 0.25));
    }
}
