//! The guide's code snippets, compiled and run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/language.md")]
pub mod language {}

#[doc = include_str!("../../../book/src/factor-graphs.md")]
pub mod factor_graphs {}

#[doc = include_str!("../../../book/src/transformation.md")]
pub mod transformation {}

#[doc = include_str!("../../../book/src/sampling.md")]
pub mod sampling {}

#[doc = include_str!("../../../book/src/runtime.md")]
pub mod runtime {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
