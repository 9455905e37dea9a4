//! The staged reduction of an operator on `Y_ω` to a multiple of the
//! identity, and the final inversion.
//!
//! Each stage maps an operator `X_{k-1}` on one truncated universe to an
//! operator `X_k` on a (usually smaller) one together with a pair `(A_k, B_k)`
//! and a certified bound for `‖X_k − A_k X_{k-1} B_k‖`.

mod certificate;
mod concentration;
mod diagonalize;
mod endgame;
mod formulas;
mod full;
mod positive;
mod scalar_reduce;
mod stabilize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::{BaseSpace, NormSampler, SpaceSpec};

pub use certificate::{chain_totals, Branch, FactorizationCertificate, StageCertificate, CERTIFICATE_FORMAT};
pub use concentration::{concentration_experiment, ConcentrationReport, PairStats, SparseComponentOperator};
pub use diagonalize::{alpha_averages, diagonalize, eta_schedule, Diagonalization};
pub use endgame::{endgame_invert, neumann_bound, Endgame};
pub use formulas::{formulas, n0, n1, n2, Formulas};
pub use full::full_factor;
pub use positive::{reduce_positive_diagonal, PositiveReduction};
pub use scalar_reduce::{cluster_point, scalar_reduce, ScalarReduction};
pub use stabilize::{select_frequencies, stabilize_levels, stabilize_component, Stabilization};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorMode {
    LargeDiagonal,
    Primary,
    Auto,
}

impl fmt::Display for FactorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactorMode::LargeDiagonal => "large-diagonal",
            FactorMode::Primary => "primary",
            FactorMode::Auto => "auto",
        })
    }
}

impl FromStr for FactorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large-diagonal" | "large" => Ok(FactorMode::LargeDiagonal),
            "primary" => Ok(FactorMode::Primary),
            "auto" => Ok(FactorMode::Auto),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub space: SpaceSpec,
    pub eta: f64,
    /// `0` means unknown; the auto mode then uses the smallest `|d_I^n|`.
    pub delta: f64,
    pub mode: FactorMode,
    pub seed: u64,
    /// Sign draws per component and candidate depth.
    pub max_samples: usize,
    /// Extra draws recorded only for the concentration statistics.
    pub diagnostic_draws: usize,
    /// Keep going when a stage misses its claimed bound.
    pub allow_degraded: bool,
    /// Used for the sampled `‖L‖`, `‖R‖` estimates.
    pub norm_sampler: NormSampler,
}

impl PipelineConfig {
    pub fn new(space: SpaceSpec, eta: f64) -> Result<Self> {
        let cfg = PipelineConfig {
            space,
            eta,
            delta: 0.0,
            mode: FactorMode::Auto,
            seed: 0,
            max_samples: 10_000,
            diagnostic_draws: 0,
            allow_degraded: false,
            norm_sampler: NormSampler::new(0, 16),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Parse(format!("η must be positive, got {}", self.eta)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::Parse(format!("δ must be nonnegative, got {}", self.delta)));
        }
        if self.max_samples == 0 {
            return Err(Error::Parse("the sample budget must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn require_weakly_null(&self, stage: &str) -> Result<()> {
        if self.space.base == BaseSpace::LinfClosure {
            return Err(Error::Stage {
                stage: stage.into(),
                reason: "the Rademacher functions are not weakly null in the L^inf closure".into(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "space": self.space.to_string(),
            "eta": self.eta,
            "delta": self.delta,
            "mode": self.mode.to_string(),
            "seed": self.seed,
            "max_samples": self.max_samples,
            "diagnostic_draws": self.diagnostic_draws,
            "allow_degraded": self.allow_degraded,
            "norm_trials": self.norm_sampler.trials,
        })
    }
}

/// `stage` failed to reach its claimed bound; an error unless degraded runs
/// are allowed.
pub(crate) fn check_claim(cfg: &PipelineConfig, stage: &str, certified: f64, claimed: f64) -> Result<()> {
    if certified <= claimed || cfg.allow_degraded {
        Ok(())
    } else {
        Err(Error::Stage {
            stage: stage.into(),
            reason: format!("certified residual {certified:e} exceeds the claimed bound {claimed:e}"),
        })
    }
}

/// Mixes stage coordinates into a seed (SplitMix64 finalizer).
pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(*p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
