//! The stages strung together: parse, analyze, restrict, transform, plan
//! and synthesize.

use std::fmt;
use std::str::FromStr;

use crate::codegen::{self, CodegenError, Provenance, SamplingPlan, SbcBundle, SynthProgram};
use crate::dataflow::{analyze, DependencyGraph};
use crate::factorgraph::{
    build_factor_graph, restrict_for_predictive, restrict_for_prior, restrict_full, FactorGraph, FactorId,
    RestrictError, Warning,
};
use crate::frontend::{parse, ParseError, Program};
use crate::transform::{
    build_queries, choose_canonical, contract, recognizable_edges, solve_selection_sets, Dag, EdgeSelectionSet, Prompt,
    Query, QuerySession, RecognizableSet, TransformError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Prior,
    Predictive,
    Full,
}

impl Mode {
    pub fn provenance(self) -> Provenance {
        match self {
            Mode::Prior => Provenance::Prior,
            Mode::Predictive => Provenance::Predictive,
            Mode::Full => Provenance::Full,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Prior => "prior",
            Mode::Predictive => "predictive",
            Mode::Full => "full",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "prior" => Ok(Mode::Prior),
            "predictive" => Ok(Mode::Predictive),
            "full" => Ok(Mode::Full),
            _ => Err(format!("unknown mode `{s}` (expected prior, predictive or full)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Restrict(#[from] RestrictError),
    #[error("{0}")]
    Transform(#[from] TransformError),
    #[error("no forward-sampling form exists: conditional densities of {} cannot be proven constant-normalized", .0.join(", "))]
    Ambiguous(Vec<String>),
    #[error("{0}")]
    Answer(String),
    #[error("{0}")]
    Codegen(#[from] CodegenError),
}

/// Callback answering one prompt with an option number.
pub type Answerer<'a> = Box<dyn FnMut(&Prompt) -> Result<usize, PipelineError> + 'a>;

/// How ambiguous conditional densities are resolved.
pub enum Policy<'a> {
    /// Affirm every candidate factor set.
    AssumeAllYes,
    /// Treat any ambiguity as failure.
    FailOnAmbiguous,
    /// Ask per prompt; the callback returns the chosen option number.
    Ask(Answerer<'a>),
}

/// Everything the transformation produced for one restriction mode.
#[derive(Clone, Debug)]
pub struct Transformed {
    pub mode: Mode,
    pub graph: FactorGraph,
    pub recognizable: RecognizableSet,
    /// All sound selection sets containing the recognizable edges.
    pub selections: Vec<EdgeSelectionSet>,
    pub queries: Vec<Query>,
    /// Prompts shown and the option chosen for each.
    pub transcript: Vec<(Prompt, usize)>,
    /// Selection sets consistent with the answers.
    pub remaining: Vec<EdgeSelectionSet>,
    pub chosen: EdgeSelectionSet,
    pub dag: Dag,
}

impl Transformed {
    /// Remove factor `f` from the chosen assignment, leaving its variable
    /// without that density. Only useful for building deliberately wrong
    /// plans.
    pub fn drop_factor(&mut self, f: FactorId) -> Result<(), String> {
        let owner = self
            .dag
            .assign
            .iter()
            .find(|(_, fs)| fs.contains(&f))
            .map(|(v, _)| v.clone())
            .ok_or_else(|| format!("factor {f} is not assigned in the chosen DAG"))?;
        self.dag.assign.get_mut(&owner).unwrap().remove(&f);
        self.dag.selection.0.remove(&(owner, f));
        Ok(())
    }

    /// `S` then `S*`, one selection set per line.
    pub fn selections_text(&self) -> String {
        let mut out = format!("S ({})\n", self.selections.len());
        for s in &self.selections {
            out.push_str(&format!("  {s}\n"));
        }
        out.push_str(&format!("S* ({})\n", self.remaining.len()));
        for s in &self.remaining {
            out.push_str(&format!("  {s}\n"));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub program: Program,
    pub deps: DependencyGraph,
    pub graph: FactorGraph,
    pub warnings: Vec<Warning>,
}

impl Analysis {
    pub fn new(src: &str) -> Result<Self, PipelineError> {
        Ok(Self::from_program(parse(src)?))
    }

    pub fn from_program(program: Program) -> Self {
        let deps = analyze(&program);
        let (graph, warnings) = build_factor_graph(&program, &deps);
        Analysis {
            program,
            deps,
            graph,
            warnings,
        }
    }

    pub fn restricted(&self, mode: Mode) -> Result<FactorGraph, PipelineError> {
        Ok(match mode {
            Mode::Prior => restrict_for_prior(&self.graph, &self.program.data_vars())?,
            Mode::Predictive => restrict_for_predictive(&self.graph, &self.program.param_vars())?,
            Mode::Full => restrict_full(&self.graph),
        })
    }

    pub fn transform(&self, mode: Mode, policy: &mut Policy<'_>) -> Result<Transformed, PipelineError> {
        let graph = self.restricted(mode)?;
        let r = recognizable_edges(&graph);
        let selections = solve_selection_sets(&graph, &r);
        if selections.is_empty() {
            return Err(TransformError::NoDag.into());
        }
        let queries = build_queries(&selections, &r, &graph)?;
        let mut session = QuerySession::new(&graph, &r, &selections)?;
        let mut transcript = Vec::new();
        match policy {
            Policy::AssumeAllYes => session.affirm_all(),
            Policy::FailOnAmbiguous => {
                if session.next_prompt().is_some() {
                    let mut vars: Vec<String> = queries.iter().map(|q| q.var.clone()).collect();
                    vars.dedup();
                    return Err(PipelineError::Ambiguous(vars));
                }
            }
            Policy::Ask(ask) => {
                while let Some(p) = session.next_prompt() {
                    let choice = ask(&p)?;
                    session.answer(&p, choice).map_err(PipelineError::Answer)?;
                    transcript.push((p, choice));
                }
            }
        }
        let remaining = session.finish();
        let chosen = choose_canonical(&remaining)?;
        let dag = contract(&graph, &chosen)?;
        Ok(Transformed {
            mode,
            graph,
            recognizable: r,
            selections,
            queries,
            transcript,
            remaining,
            chosen,
            dag,
        })
    }

    pub fn plan_for(&self, t: &Transformed) -> Result<SamplingPlan, PipelineError> {
        Ok(codegen::sample_graph(
            &t.dag,
            &t.graph,
            &self.program,
            &self.deps,
            t.mode.provenance(),
        )?)
    }

    pub fn plan(&self, mode: Mode, policy: &mut Policy<'_>) -> Result<SamplingPlan, PipelineError> {
        let t = self.transform(mode, policy)?;
        self.plan_for(&t)
    }

    /// Prior and predictive plans, each checked for well-formedness.
    pub fn ppc_plans(&self, policy: &mut Policy<'_>) -> Result<(SamplingPlan, SamplingPlan), PipelineError> {
        let prior = self.plan(Mode::Prior, policy)?;
        let predictive = self.plan(Mode::Predictive, policy)?;
        let plan = codegen::prior_predictive_plan(&prior, &predictive, &self.program);
        let data: std::collections::BTreeSet<String> = self
            .program
            .data_vars()
            .into_iter()
            .filter(|v| !plan.renamed.contains_key(v))
            .collect();
        plan.check(&data)?;
        Ok((prior, predictive))
    }

    pub fn ppc(&self, policy: &mut Policy<'_>) -> Result<Vec<SynthProgram>, PipelineError> {
        let (prior, predictive) = self.ppc_plans(policy)?;
        Ok(codegen::synthesize_ppc(&prior, &predictive, &self.program)?)
    }

    pub fn sbc(&self, policy: &mut Policy<'_>, draws_per_rank: usize) -> Result<SbcBundle, PipelineError> {
        let (prior, predictive) = self.ppc_plans(policy)?;
        Ok(codegen::synthesize_sbc(
            &prior,
            &predictive,
            &self.program,
            draws_per_rank,
        )?)
    }
}
