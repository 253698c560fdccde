//! Turn density-form probabilistic programs into forward-sampling programs.
//!
//! The pipeline extracts a factor graph from a program's `target +=`
//! statements, enumerates every sound way of orienting that graph into a DAG
//! with a small SAT encoding, asks the user about conditional densities that
//! cannot be recognized syntactically, and emits sampling code in topological
//! order. The [`runtime`] module executes the result and checks it
//! statistically against a joint Metropolis sampler.

pub mod codegen;
pub mod dataflow;
pub mod factorgraph;
pub mod fixtures;
pub mod frontend;
pub mod pipeline;
pub mod runtime;
pub mod satcore;
pub mod transform;

pub use frontend::{parse, ParseError, Program};
