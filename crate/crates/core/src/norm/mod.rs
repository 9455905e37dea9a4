//! Norms of Haar system spaces, their Hardy versions and the independent sum.

mod engine;
mod operator_bounds;
pub mod sign;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{base_norm, hardy_norm, norm_of_blocks, norm_upper_bound, omega_norm, ComponentBlock};
pub use operator_bounds::{certified_column_bound, haar_norm, norm_ratio, operator_norm_lower, NormSampler};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BaseSpace {
    Lp(f64),
    LinfClosure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RademacherMode {
    Constant,
    Independent,
}

/// A base norm together with the Rademacher mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub base: BaseSpace,
    pub rademacher: RademacherMode,
}

impl SpaceSpec {
    pub fn lp(p: f64, rademacher: RademacherMode) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::Parse(format!("L^p needs a finite p >= 1, got {p}")));
        }
        Ok(SpaceSpec { base: BaseSpace::Lp(p), rademacher })
    }

    pub fn linf(rademacher: RademacherMode) -> Self {
        SpaceSpec { base: BaseSpace::LinfClosure, rademacher }
    }

    /// The dual exponent space, for `L^p` only.
    pub fn dual(&self) -> Result<Self> {
        match self.base {
            BaseSpace::Lp(1.0) => Ok(Self::linf(self.rademacher)),
            BaseSpace::Lp(p) => Self::lp(p / (p - 1.0), self.rademacher),
            BaseSpace::LinfClosure => Err(Error::Unsupported("dual of the L^inf closure".into())),
        }
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.rademacher {
            RademacherMode::Constant => "constant",
            RademacherMode::Independent => "independent",
        };
        match self.base {
            BaseSpace::Lp(p) => write!(f, "lp:{p}:{mode}"),
            BaseSpace::LinfClosure => write!(f, "linf:{mode}"),
        }
    }
}

impl FromStr for SpaceSpec {
    type Err = Error;

    /// `lp:<p>[:independent|:constant]` or `linf[:independent|:constant]`;
    /// the mode defaults to constant.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let mode_of = |p: Option<&&str>| -> Result<RademacherMode> {
            match p.map(|s| s.to_ascii_lowercase()).as_deref() {
                None | Some("constant") => Ok(RademacherMode::Constant),
                Some("independent") => Ok(RademacherMode::Independent),
                Some(other) => Err(Error::Parse(format!("unknown Rademacher mode {other:?}"))),
            }
        };
        match parts.first().map(|s| s.to_ascii_lowercase()).as_deref() {
            Some("lp") if (2..=3).contains(&parts.len()) => {
                let p: f64 = parts[1]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad exponent in {s:?}")))?;
                SpaceSpec::lp(p, mode_of(parts.get(2))?)
            }
            Some("linf") if parts.len() <= 2 => Ok(SpaceSpec::linf(mode_of(parts.get(1))?)),
            _ => Err(Error::Parse(format!("malformed space spec {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormMethod {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub method: NormMethod,
    pub stat_error: f64,
}

impl NormResult {
    pub fn exact(value: f64) -> Self {
        NormResult { value, method: NormMethod::Exact, stat_error: 0.0 }
    }
}

pub const MAX_EXACT_CUTOFF: u32 = 24;

/// How `E_u|Σ r(u) …|` is evaluated at each point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectationStrategy {
    exact_cutoff: u32,
    pub mc_samples: u64,
    pub seed: u64,
}

impl ExpectationStrategy {
    pub fn new(exact_cutoff: u32, mc_samples: u64, seed: u64) -> Result<Self> {
        if exact_cutoff > MAX_EXACT_CUTOFF {
            return Err(Error::Parse(format!(
                "exact cutoff {exact_cutoff} exceeds {MAX_EXACT_CUTOFF}"
            )));
        }
        Ok(ExpectationStrategy { exact_cutoff, mc_samples, seed })
    }

    pub fn exact_cutoff(&self) -> u32 {
        self.exact_cutoff
    }
}

impl Default for ExpectationStrategy {
    fn default() -> Self {
        ExpectationStrategy { exact_cutoff: 20, mc_samples: 4096, seed: 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_specs() {
        assert_eq!("lp:1:independent".parse::<SpaceSpec>().unwrap(), SpaceSpec::lp(1.0, RademacherMode::Independent).unwrap());
        assert_eq!("lp:2".parse::<SpaceSpec>().unwrap(), SpaceSpec::lp(2.0, RademacherMode::Constant).unwrap());
        assert_eq!("linf".parse::<SpaceSpec>().unwrap(), SpaceSpec::linf(RademacherMode::Constant));
        assert_eq!("linf:independent".parse::<SpaceSpec>().unwrap(), SpaceSpec::linf(RademacherMode::Independent));
        for bad in ["lp", "lp:0.5", "lp:x", "lq:2", "lp:2:sometimes", "linf:2:constant"] {
            assert!(bad.parse::<SpaceSpec>().is_err(), "{bad}");
        }
        let s = SpaceSpec::lp(4.0, RademacherMode::Constant).unwrap();
        assert_eq!(s.to_string().parse::<SpaceSpec>().unwrap(), s);
    }

    #[test]
    fn strategy_cap() {
        assert!(ExpectationStrategy::new(25, 10, 0).is_err());
        assert_eq!(ExpectationStrategy::default().exact_cutoff(), 20);
    }

    #[test]
    fn duals() {
        let s = SpaceSpec::lp(4.0, RademacherMode::Constant).unwrap();
        match s.dual().unwrap().base {
            BaseSpace::Lp(q) => assert!((q - 4.0 / 3.0).abs() < 1e-15),
            _ => panic!(),
        }
        assert_eq!(SpaceSpec::lp(1.0, RademacherMode::Constant).unwrap().dual().unwrap().base, BaseSpace::LinfClosure);
    }
}
