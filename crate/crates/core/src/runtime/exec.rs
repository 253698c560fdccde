//! Running sampling plans, synthesized programs and the reference sampler.

use std::collections::{BTreeMap, BTreeSet};

use super::interp::{Decls, Env, ExecError, Interp, Streams};
use super::mh::{self, MhConfig, MhStats, Param, Target};
use super::table::DrawTable;
use super::value::Value;
use crate::codegen::{CodeSegment, Label, SamplingPlan, SynthProgram};
use crate::dataflow::{backward_slice, prune, DependencyGraph};
use crate::factorgraph::FactorGraph;
use crate::frontend::{BlockKind, ElemType, Program, Stmt};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{}{context}: {message}", row.map(|r| format!("row {r}: ")).unwrap_or_default())]
pub struct RuntimeError {
    pub row: Option<usize>,
    /// What was running, e.g. `segment mu`.
    pub context: String,
    pub message: String,
}

impl RuntimeError {
    pub fn new(context: impl Into<String>, message: impl Into<String>) -> Self {
        RuntimeError {
            row: None,
            context: context.into(),
            message: message.into(),
        }
    }

    fn at(row: usize, context: impl Into<String>, e: ExecError) -> Self {
        RuntimeError {
            row: Some(row),
            context: context.into(),
            message: e.to_string(),
        }
    }
}

/// Draws plus sampler diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Run {
    pub table: DrawTable,
    /// Metropolis acceptance per sampled variable.
    pub stats: BTreeMap<String, MhStats>,
    /// Variables sampled from a segment without a density statement.
    pub improper: Vec<String>,
}

impl Run {
    /// Improper segments and variables whose proposals were all rejected.
    pub fn warnings(&self) -> Vec<String> {
        let flat = self
            .improper
            .iter()
            .map(|v| format!("warning: `{v}` has no density statement; its draws are a random walk"));
        let stuck = self
            .stats
            .iter()
            .filter(|(_, s)| s.proposed > 0 && s.accepted == 0)
            .map(|(v, s)| {
                format!(
                    "warning: all {} Metropolis proposals for `{v}` were rejected",
                    s.proposed
                )
            });
        flat.chain(stuck).collect()
    }
}

pub fn program_decls(prog: &Program) -> Decls {
    prog.symbols.iter().map(|(n, s)| (n.clone(), s.decl.clone())).collect()
}

/// Program declarations overlaid with the plan's segment declarations.
pub fn plan_decls(plan: &SamplingPlan, prog: &Program) -> Decls {
    let mut d = program_decls(prog);
    for s in &plan.segments {
        for x in &s.decls {
            d.insert(x.name.clone(), x.clone());
        }
    }
    d
}

/// Zero values shaped like the declarations of `vars`, sized from `env`.
fn probe_shapes(decls: &Decls, env: &Env, vars: &[String]) -> Result<Vec<Value>, RuntimeError> {
    let mut interp = Interp::new(decls.clone(), env.clone(), Streams::new(0, 0));
    vars.iter()
        .map(|v| {
            let err = |e: ExecError| RuntimeError::new(format!("shape of `{v}`"), e.to_string());
            let len = interp.declared_len(v).map_err(err)?;
            let int = interp.decls.get(v).is_some_and(|d| d.elem_type() == ElemType::Int);
            Ok(match (len, int) {
                (None, true) => Value::Int(0),
                (None, false) => Value::Real(0.0),
                (Some(n), true) => Value::IntArray(vec![0; n]),
                (Some(n), false) => Value::RealArray(vec![0.0; n]),
            })
        })
        .collect()
}

fn record(interp: &Interp, vars: &[String]) -> Result<Vec<Value>, ExecError> {
    vars.iter()
        .map(|v| {
            interp
                .env
                .get(v)
                .cloned()
                .ok_or_else(|| ExecError::Fault(format!("`{v}` was not assigned")))
        })
        .collect()
}

/// Run an RNG segment: its slice, then the `_rng` assignment.
pub fn exec_rng(seg: &CodeSegment, interp: &mut Interp) -> Result<(), ExecError> {
    interp.exec(&seg.statements)
}

/// One Metropolis draw of a PDF segment's target from a fresh chain.
pub fn exec_pdf(seg: &CodeSegment, interp: &mut Interp, cfg: &MhConfig) -> Result<MhStats, ExecError> {
    let params = seg
        .target_vars
        .iter()
        .map(|v| Param::from_decl(interp, v))
        .collect::<Result<_, _>>()?;
    let t = Target {
        stmts: &seg.statements,
        params,
    };
    mh::fresh_draw(interp, &t, cfg)
}

fn check_bound(env: &Env, needed: impl IntoIterator<Item = String>, context: &str) -> Result<(), RuntimeError> {
    for v in needed {
        if !env.contains_key(&v) {
            return Err(RuntimeError::new(context, format!("input `{v}` is not bound")));
        }
    }
    Ok(())
}

/// `n` independent passes over the plan. Row `r` draws every variable from
/// the substream (seed, r, variable).
pub fn run_plan(
    plan: &SamplingPlan,
    prog: &Program,
    data: &Env,
    n: usize,
    seed: u64,
    cfg: &MhConfig,
) -> Result<Run, RuntimeError> {
    cfg.validate().map_err(|m| RuntimeError::new("configuration", m))?;
    let inputs: BTreeSet<String> = data.keys().cloned().collect();
    plan.check_inputs(&inputs)
        .map_err(|e| RuntimeError::new("plan", e.to_string()))?;
    let decls = plan_decls(plan, prog);
    let vars: Vec<String> = plan.drawn().into_iter().map(String::from).collect();
    let mut run = Run {
        table: DrawTable::for_values(&vars, &probe_shapes(&decls, data, &vars)?),
        stats: BTreeMap::new(),
        improper: plan.improper().into_iter().map(String::from).collect(),
    };
    for row in 0..n {
        let mut interp = Interp::new(decls.clone(), data.clone(), Streams::new(seed, row as u64));
        for seg in &plan.segments {
            let ctx = || format!("{} segment `{}`", seg.label, seg.target());
            match seg.label {
                Label::Rng => exec_rng(seg, &mut interp).map_err(|e| RuntimeError::at(row, ctx(), e))?,
                Label::Pdf => {
                    let s = exec_pdf(seg, &mut interp, cfg).map_err(|e| RuntimeError::at(row, ctx(), e))?;
                    run.stats.entry(seg.target().to_string()).or_default().add(s);
                }
            }
        }
        let vals = record(&interp, &vars).map_err(|e| RuntimeError::at(row, "plan", e))?;
        run.table.push_values(&vals);
    }
    Ok(run)
}

/// Statements whose `target` contribution is the model density:
/// transformed parameters followed by the model block.
fn density_statements(prog: &Program) -> Vec<Stmt> {
    prog.block_stmts(BlockKind::TransformedParameters)
        .iter()
        .chain(prog.block_stmts(BlockKind::Model))
        .cloned()
        .collect()
}

fn data_env(
    prog: &Program,
    data: &Env,
    handoff: Option<(&DrawTable, usize)>,
    decls: &Decls,
) -> Result<Env, RuntimeError> {
    let mut env = data.clone();
    if let Some((t, r)) = handoff {
        env.extend(t.row_env(r, decls));
    }
    check_bound(&env, prog.declared_in(BlockKind::Data), "data")?;
    Ok(env)
}

fn params_of(prog: &Program, interp: &mut Interp) -> Result<Vec<Param>, ExecError> {
    prog.declared_in(BlockKind::Parameters)
        .iter()
        .map(|p| Param::from_decl(interp, p))
        .collect()
}

/// Execute a program `n` times. Each row runs transformed data, draws the
/// parameters from a fresh Metropolis chain, then runs generated
/// quantities; `outputs` are recorded. Row `r` of `handoff` supplies extra
/// data for row `r`.
pub fn run_program(
    prog: &Program,
    data: &Env,
    handoff: Option<&DrawTable>,
    n: usize,
    seed: u64,
    cfg: &MhConfig,
    outputs: &[String],
) -> Result<Run, RuntimeError> {
    cfg.validate().map_err(|m| RuntimeError::new("configuration", m))?;
    if let Some(h) = handoff {
        if h.nrows() < n {
            return Err(RuntimeError::new(
                "handoff",
                format!("{} rows supplied, {n} needed", h.nrows()),
            ));
        }
    }
    let decls = program_decls(prog);
    let density = density_statements(prog);
    let mut run = Run::default();
    for row in 0..n {
        let env = data_env(prog, data, handoff.map(|h| (h, row)), &decls)?;
        if row == 0 {
            let mut probe = Interp::new(decls.clone(), env.clone(), Streams::new(0, 0));
            probe.exec(prog.block_stmts(BlockKind::TransformedData)).ok();
            run.table = DrawTable::for_values(outputs, &probe_shapes(&decls, &probe.env, outputs)?);
        }
        let mut interp = Interp::new(decls.clone(), env, Streams::new(seed, row as u64));
        let err = |ctx: &'static str| move |e: ExecError| RuntimeError::at(row, ctx, e);
        interp
            .exec(prog.block_stmts(BlockKind::TransformedData))
            .map_err(err("transformed data"))?;
        let params = params_of(prog, &mut interp).map_err(err("parameters"))?;
        if !params.is_empty() {
            let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
            let t = Target {
                stmts: &density,
                params,
            };
            let s = mh::fresh_draw(&mut interp, &t, cfg).map_err(err("model"))?;
            run.stats.entry(names.join(",")).or_default().add(s);
        }
        interp
            .exec(prog.block_stmts(BlockKind::GeneratedQuantities))
            .map_err(err("generated quantities"))?;
        run.table
            .push_values(&record(&interp, outputs).map_err(err("outputs"))?);
    }
    Ok(run)
}

/// Execute a program as one Metropolis chain: transformed data once, then
/// `n` draws spaced `cfg.thin` sweeps apart, generated quantities per draw.
/// The chain uses the substreams of row `row`.
pub fn run_program_chain(
    prog: &Program,
    data: &Env,
    n: usize,
    seed: u64,
    row: u64,
    cfg: &MhConfig,
    outputs: &[String],
) -> Result<Run, RuntimeError> {
    cfg.validate().map_err(|m| RuntimeError::new("configuration", m))?;
    let decls = program_decls(prog);
    let env = data_env(prog, data, None, &decls)?;
    let density = density_statements(prog);
    let r = row as usize;
    let err = |ctx: &'static str| move |e: ExecError| RuntimeError::at(r, ctx, e);
    let mut interp = Interp::new(decls.clone(), env, Streams::new(seed, row));
    interp
        .exec(prog.block_stmts(BlockKind::TransformedData))
        .map_err(err("transformed data"))?;
    let gq = prog.block_stmts(BlockKind::GeneratedQuantities);
    let mut run = Run::default();
    let mut rows: Vec<Vec<Value>> = Vec::with_capacity(n);
    let params = params_of(prog, &mut interp).map_err(err("parameters"))?;
    let mut each = |i: &mut Interp| -> Result<(), ExecError> {
        i.exec(gq)?;
        rows.push(record(i, outputs)?);
        Ok(())
    };
    if params.is_empty() {
        for _ in 0..n {
            each(&mut interp).map_err(err("generated quantities"))?;
        }
    } else {
        let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
        let t = Target {
            stmts: &density,
            params,
        };
        let s = mh::chain(&mut interp, &t, cfg, n, &mut each).map_err(err("model"))?;
        run.stats.insert(names.join(","), s);
    }
    let first = match rows.first() {
        Some(r) => r.clone(),
        None => probe_shapes(&decls, &interp.env, outputs)?,
    };
    run.table = DrawTable::for_values(outputs, &first);
    for r in &rows {
        run.table.push_values(r);
    }
    Ok(run)
}

/// Run a chain of synthesized programs, passing each program's draws to
/// the programs after it. Columns are the draws of every program in order.
pub fn run_programs(
    progs: &[SynthProgram],
    data: &Env,
    n: usize,
    seed: u64,
    cfg: &MhConfig,
) -> Result<Run, RuntimeError> {
    let mut run = Run::default();
    for p in progs {
        let handoff = if p.handoffs.is_empty() {
            None
        } else {
            Some(
                run.table
                    .select(&p.handoffs)
                    .map_err(|m| RuntimeError::new(&p.name, m))?,
            )
        };
        let r = run_program(&p.program, data, handoff.as_ref(), n, seed, cfg, &p.draws).map_err(|e| RuntimeError {
            context: format!("{}: {}", p.name, e.context),
            ..e
        })?;
        run.table = run.table.join(&r.table).map_err(|m| RuntimeError::new(&p.name, m))?;
        run.stats.extend(r.stats);
    }
    Ok(run)
}

/// Statements computing the sum of all factors of `g`: the slice they need,
/// then the factor statements in their control flow.
pub fn joint_statements(g: &FactorGraph, prog: &Program, dep: &DependencyGraph) -> Vec<Stmt> {
    let ids: BTreeSet<_> = g.factors.values().map(|f| f.stmt.id).collect();
    let mut stmts = backward_slice(&ids, dep, prog);
    stmts.extend(prune(prog.block_stmts(BlockKind::Model), &|s| ids.contains(&s.id)));
    stmts
}

/// Random-walk Metropolis over every variable of `g` jointly, targeting
/// the product of its factors. Held inputs come from `data`. Columns follow
/// declaration order.
pub fn reference_joint_sampler(
    g: &FactorGraph,
    prog: &Program,
    dep: &DependencyGraph,
    data: &Env,
    n: usize,
    seed: u64,
    cfg: &MhConfig,
) -> Result<Run, RuntimeError> {
    cfg.validate().map_err(|m| RuntimeError::new("configuration", m))?;
    let mut vars: Vec<String> = g.variables.keys().cloned().collect();
    vars.sort_by_key(|v| prog.decl_order(v));
    let stmts = joint_statements(g, prog, dep);
    let decls = program_decls(prog);
    let mut env = data.clone();
    for v in &vars {
        env.remove(v);
    }
    let mut interp = Interp::new(decls.clone(), env, Streams::new(seed, 0));
    let err = |e: ExecError| RuntimeError::new("reference sampler", e.to_string());
    let params = vars
        .iter()
        .map(|v| Param::from_decl(&mut interp, v))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let t = Target { stmts: &stmts, params };
    let mut run = Run {
        table: DrawTable::for_values(&vars, &probe_shapes(&decls, data, &vars)?),
        stats: BTreeMap::new(),
        improper: Vec::new(),
    };
    let mut rows = Vec::with_capacity(n);
    let s = mh::chain(&mut interp, &t, cfg, n, &mut |i| {
        rows.push(record(i, &vars)?);
        Ok(())
    })
    .map_err(err)?;
    for r in &rows {
        run.table.push_values(r);
    }
    run.stats.insert(vars.join(","), s);
    Ok(run)
}
