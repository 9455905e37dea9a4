//! Finite truncations of Haar system Hardy spaces and of their independent
//! sums, with exact and floating arithmetic.
//!
//! The crate computes Hardy space norms under constant or independent
//! Rademacher signs, builds faithful and almost faithful Haar systems with
//! their canonical factor operators, and runs a staged reduction that factors
//! the identity through a given operator `T` (or through `I - T`). Every run
//! produces a certificate that [`verify::run_verify`] re-checks from the
//! serialized matrices alone.
//!
//! ```
//! use haarfact::norm::SpaceSpec;
//! use haarfact::operator::OmegaOperator;
//! use haarfact::pipeline::{full_factor, PipelineConfig};
//! use haarfact::scalar::Rational;
//!
//! let t: OmegaOperator<Rational> = OmegaOperator::identity(1);
//! let mut cfg = PipelineConfig::new("lp:2:constant".parse::<SpaceSpec>()?, 0.1)?;
//! cfg.norm_sampler.trials = 2;
//! let cert = full_factor(&t, &cfg)?;
//! assert!(cert.l.compose(&t)?.compose(&cert.r)?.is_identity());
//! # Ok::<(), haarfact::error::Error>(())
//! ```

pub mod bench;
pub mod dyadic;
pub mod error;
pub mod faithful;
pub mod generate;
pub mod gamlen_gaudet;
pub mod linalg;
pub mod norm;
pub mod omega;
pub mod operator;
pub mod pipeline;
pub mod scalar;
pub mod sets;
pub mod step;
pub mod verify;
