//! Running an SBC bundle: simulate, refit, rank.

use std::collections::BTreeMap;

use super::exec::{run_program_chain, run_programs, RuntimeError};
use super::interp::Env;
use super::mh::MhConfig;
use super::stats::{rank_uniformity, Uniformity};
use super::table::{split_column, DrawTable};
use crate::codegen::SbcBundle;

#[derive(Clone, Debug, PartialEq)]
pub struct SbcRun {
    /// Ranks per column (`mu`, `theta.3`, ...), one per replication.
    pub ranks: BTreeMap<String, Vec<usize>>,
    /// Posterior draws per replication; ranks lie in `0..=max_rank`.
    pub max_rank: usize,
}

impl SbcRun {
    pub fn uniformity(&self, bins: usize) -> BTreeMap<String, Uniformity> {
        self.ranks
            .iter()
            .map(|(c, r)| (c.clone(), rank_uniformity(r, self.max_rank, bins)))
            .collect()
    }
}

/// `reps` replications: draw truths and simulated data, fit the posterior
/// program with one chain of `draws_per_rank` draws, and count the draws
/// below each truth.
pub fn run_sbc(bundle: &SbcBundle, data: &Env, reps: usize, seed: u64, cfg: &MhConfig) -> Result<SbcRun, RuntimeError> {
    let sims = if bundle.ppc.is_empty() {
        DrawTable::default()
    } else {
        run_programs(&bundle.ppc, data, reps, seed, cfg)?.table
    };
    let handoff = sims
        .select(&bundle.posterior.handoffs)
        .map_err(|m| RuntimeError::new("handoff", m))?;
    let outputs: Vec<String> = bundle.params.iter().map(|p| format!("{p}_lt")).collect();
    let mut ranks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for rep in 0..reps {
        let mut env = data.clone();
        if !handoff.columns.is_empty() {
            env.extend(handoff.row_env(rep, &Default::default()));
        }
        let run = run_program_chain(
            &bundle.posterior.program,
            &env,
            bundle.draws_per_rank,
            seed,
            rep as u64,
            cfg,
            &outputs,
        )?;
        for (i, col) in run.table.columns.iter().enumerate() {
            let (base, k) = split_column(col);
            let name = base.strip_suffix("_lt").unwrap_or(base);
            let key = k.map_or(name.to_string(), |k| format!("{name}.{k}"));
            let rank = run.table.rows.iter().map(|r| r[i] as usize).sum();
            ranks.entry(key).or_default().push(rank);
        }
    }
    Ok(SbcRun {
        ranks,
        max_rank: bundle.draws_per_rank,
    })
}
