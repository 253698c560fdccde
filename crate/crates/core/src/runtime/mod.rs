//! Executing plans and programs.
//!
//! Expressions and statements run in a tree-walking [`Interp`]. RNG
//! segments draw directly; PDF segments draw with single-site random-walk
//! Metropolis ([`mh`]). Every (seed, row, variable) triple has its own
//! random stream, which makes runs reproducible and lets a chain of
//! synthesized programs reproduce a plan's draws exactly.

pub mod dist;
mod exec;
mod interp;
pub mod mh;
mod sbc;
pub mod stats;
mod table;
mod value;

pub use exec::{
    exec_pdf, exec_rng, joint_statements, plan_decls, program_decls, reference_joint_sampler, run_plan, run_program,
    run_program_chain, run_programs, Run, RuntimeError,
};
pub use interp::{substream, Decls, Env, ExecError, Interp, Streams};
pub use mh::{MhConfig, MhStats};
pub use sbc::{run_sbc, SbcRun};
pub use stats::{equivalence_check, EquivalenceReport, Tolerances};
pub use table::{column_names, read_env, split_column, DrawTable};
pub use value::Value;

#[cfg(test)]
mod tests;
