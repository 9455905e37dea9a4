//! Code listings of the guide in `book/src`, compiled and run as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/dyadic.md")]
pub mod dyadic {}
#[doc = include_str!("../../../book/src/norms.md")]
pub mod norms {}
#[doc = include_str!("../../../book/src/faithful.md")]
pub mod faithful {}
#[doc = include_str!("../../../book/src/omega.md")]
pub mod omega {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
