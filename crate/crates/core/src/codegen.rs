//! Code segments, sampling plans and program synthesis.
//!
//! A variable whose assigned factor set is a single recognizable
//! distribution statement becomes an RNG segment; every other variable
//! becomes a PDF segment sampled with Metropolis-Hastings from the product
//! of its factors. A plan lists segments in topological order, and
//! [`synthesize_programs`] lays a plan out as one or more programs, one per
//! PDF segment, chained through their data blocks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};

use crate::dataflow::{backward_slice, prune, DependencyGraph};
use crate::factorgraph::{FactorGraph, FactorId};
use crate::frontend::{
    free_vars, parse, pretty, Block, BlockKind, Bounds, Decl, Expr, LValue, Program, Stmt, StmtKind, TypeSpelling,
};
use crate::transform::{match_distribution, Dag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Rng,
    Pdf,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Rng => "RNG",
            Label::Pdf => "PDF",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodeSegment {
    pub label: Label,
    pub target_vars: Vec<String>,
    /// For RNG segments the final statement is the `_rng` assignment; for
    /// PDF segments these are the slice followed by the density statements.
    pub statements: Vec<Stmt>,
    /// Variables read but not computed by the segment.
    pub required_inputs: BTreeSet<String>,
    pub factors: BTreeSet<FactorId>,
    /// Declarations of the target variables, then of locals assigned here.
    pub decls: Vec<Decl>,
}

impl CodeSegment {
    pub fn target(&self) -> &str {
        &self.target_vars[0]
    }

    /// Locals assigned by the segment (declarations after the targets).
    pub fn locals(&self) -> &[Decl] {
        &self.decls[self.target_vars.len()..]
    }

    pub fn rename(&mut self, map: &BTreeMap<String, String>) {
        let sub = |n: &String| map.get(n).cloned().unwrap_or_else(|| n.clone());
        self.target_vars = self.target_vars.iter().map(sub).collect();
        self.required_inputs = self.required_inputs.iter().map(sub).collect();
        self.statements.iter_mut().for_each(|s| s.rename(map));
        for d in &mut self.decls {
            *d = rename_decl(d, map);
        }
    }
}

impl fmt::Display for CodeSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fs: Vec<String> = self.factors.iter().map(|x| x.to_string()).collect();
        writeln!(
            f,
            "// {} {} <- {{{}}}",
            self.label,
            self.target_vars.join(", "),
            fs.join(", ")
        )?;
        f.write_str(&pretty::stmts_to_string(&self.statements, 0))
    }
}

fn rename_decl(d: &Decl, map: &BTreeMap<String, String>) -> Decl {
    let mut s = Stmt {
        id: 0,
        kind: StmtKind::Decl(d.clone()),
    };
    s.rename(map);
    match s.kind {
        StmtKind::Decl(d) => d,
        _ => unreachable!(),
    }
}

fn strip_bounds(d: &Decl) -> Decl {
    Decl {
        bounds: Bounds {
            lower: None,
            upper: None,
        },
        ..d.clone()
    }
}

fn decl_vars(d: &Decl) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for e in [d.length(), d.bounds.lower.as_ref(), d.bounds.upper.as_ref()]
        .into_iter()
        .flatten()
    {
        e.collect_vars(&mut out);
    }
    out
}

fn assigned_names(stmts: &[Stmt]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for s in stmts {
        s.walk(&mut |x| {
            if let StmtKind::Assign { target, .. } = &x.kind {
                out.insert(target.name.clone());
            }
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CodegenError {
    #[error("variable `{0}` is not declared in the program")]
    Undeclared(String),
    #[error("factor {0} is not in the factor graph")]
    UnknownFactor(FactorId),
    #[error("sampling plan is not well formed: {0}")]
    IllFormed(String),
    #[error("synthesized program does not parse: {message}\n{text}")]
    Invalid { message: String, text: String },
}

/// Build the code segment drawing `v` from the factors in `a_v`.
pub fn sample_segment(
    v: &str,
    a_v: &BTreeSet<FactorId>,
    g: &FactorGraph,
    prog: &Program,
    dep: &DependencyGraph,
) -> Result<CodeSegment, CodegenError> {
    let sym = prog
        .symbols
        .get(v)
        .ok_or_else(|| CodegenError::Undeclared(v.to_string()))?;
    let factors: Vec<_> = a_v
        .iter()
        .map(|f| g.factors.get(f).ok_or(CodegenError::UnknownFactor(*f)))
        .collect::<Result<_, _>>()?;

    let rng = match factors.as_slice() {
        [f] if !f.opaque => match_distribution(&f.stmt.kind)
            .filter(|(var, _, _)| *var == v)
            .map(|(_, dist, args)| (f, dist, args.to_vec())),
        _ => None,
    };
    let ids: BTreeSet<_> = factors.iter().map(|f| f.stmt.id).collect();
    let (label, statements) = match rng {
        Some((f, dist, args)) => {
            let mut stmts = backward_slice(&ids, dep, prog);
            stmts.push(Stmt {
                id: f.stmt.id,
                kind: StmtKind::Assign {
                    target: LValue {
                        name: v.to_string(),
                        index: None,
                    },
                    value: Expr::Call(format!("{dist}_rng"), args),
                },
            });
            (Label::Rng, stmts)
        }
        None => {
            let mut stmts = backward_slice(&ids, dep, prog);
            stmts.extend(prune(prog.block_stmts(BlockKind::Model), &|s| ids.contains(&s.id)));
            (Label::Pdf, stmts)
        }
    };

    let assigned = assigned_names(&statements);
    let mut decls = vec![sym.decl.clone()];
    for name in &assigned {
        if name == v {
            continue;
        }
        let s = prog
            .symbols
            .get(name)
            .ok_or_else(|| CodegenError::Undeclared(name.clone()))?;
        decls.push(strip_bounds(&s.decl));
    }
    let mut required: BTreeSet<String> = statements.iter().flat_map(free_vars).collect();
    for d in &decls {
        required.extend(decl_vars(d));
    }
    for name in assigned.iter().map(String::as_str).chain([v]) {
        required.remove(name);
    }
    Ok(CodeSegment {
        label,
        target_vars: vec![v.to_string()],
        statements,
        required_inputs: required,
        factors: a_v.clone(),
        decls,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Prior,
    Predictive,
    Full,
    PriorPredictive,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Prior => "prior",
            Provenance::Predictive => "predictive",
            Provenance::Full => "full",
            Provenance::PriorPredictive => "prior-predictive",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPlan {
    pub provenance: Provenance,
    pub segments: Vec<CodeSegment>,
    /// Original name to emitted name, for variables drawn under a new name.
    pub renamed: BTreeMap<String, String>,
}

impl SamplingPlan {
    /// Drawn variables in plan order.
    pub fn drawn(&self) -> Vec<&str> {
        self.segments
            .iter()
            .flat_map(|s| s.target_vars.iter().map(String::as_str))
            .collect()
    }

    pub fn num_pdf(&self) -> usize {
        self.segments.iter().filter(|s| s.label == Label::Pdf).count()
    }

    /// Every segment reads only `inputs` and variables drawn before it.
    pub fn check(&self, inputs: &BTreeSet<String>) -> Result<(), CodegenError> {
        self.check_inputs(inputs)?;
        match self.improper().first() {
            Some(v) => Err(CodegenError::IllFormed(format!(
                "PDF segment for `{v}` has no density statement"
            ))),
            None => Ok(()),
        }
    }

    /// Every segment reads only `inputs` and variables drawn before it.
    pub fn check_inputs(&self, inputs: &BTreeSet<String>) -> Result<(), CodegenError> {
        let mut have = inputs.clone();
        for s in &self.segments {
            if let Some(x) = s.required_inputs.iter().find(|x| !have.contains(*x)) {
                return Err(CodegenError::IllFormed(format!(
                    "segment for `{}` reads `{x}` before it is available",
                    s.target()
                )));
            }
            have.extend(s.target_vars.iter().cloned());
        }
        Ok(())
    }

    /// Targets of PDF segments without any density statement.
    pub fn improper(&self) -> Vec<&str> {
        self.segments
            .iter()
            .filter(|s| s.label == Label::Pdf && !s.statements.iter().any(contains_density))
            .map(|s| s.target())
            .collect()
    }

    pub fn rename(&mut self, map: &BTreeMap<String, String>) {
        self.segments.iter_mut().for_each(|s| s.rename(map));
        for (orig, new) in map {
            if self.drawn().contains(&new.as_str()) {
                self.renamed.insert(orig.clone(), new.clone());
            }
        }
    }
}

impl fmt::Display for SamplingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "// plan: {}", self.provenance)?;
        for s in &self.segments {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

fn contains_density(s: &Stmt) -> bool {
    let mut found = false;
    s.walk(&mut |x| found |= x.is_density());
    found
}

/// One segment per DAG variable, in topological order with ties broken by
/// declaration order.
pub fn sample_graph(
    dag: &Dag,
    g: &FactorGraph,
    prog: &Program,
    dep: &DependencyGraph,
    provenance: Provenance,
) -> Result<SamplingPlan, CodegenError> {
    let order = dag.topo_order(&|v| prog.decl_order(v));
    let segments = order
        .iter()
        .map(|v| sample_segment(v, &dag.assign[v], g, prog, dep))
        .collect::<Result<_, _>>()?;
    Ok(SamplingPlan {
        provenance,
        segments,
        renamed: BTreeMap::new(),
    })
}

/// The prior plan followed by the predictive plan, with drawn data renamed
/// to `<name>_sim`.
pub fn prior_predictive_plan(prior: &SamplingPlan, predictive: &SamplingPlan, prog: &Program) -> SamplingPlan {
    let data = prog.data_vars();
    let map: BTreeMap<String, String> = predictive
        .drawn()
        .into_iter()
        .filter(|v| data.contains(*v))
        .map(|v| (v.to_string(), format!("{v}_sim")))
        .collect();
    let mut plan = SamplingPlan {
        provenance: Provenance::PriorPredictive,
        segments: prior.segments.iter().chain(&predictive.segments).cloned().collect(),
        renamed: BTreeMap::new(),
    };
    plan.rename(&map);
    plan
}

/// A synthesized program and how it connects to the rest of its chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthProgram {
    /// File stem, e.g. `ppc_1`.
    pub name: String,
    pub program: Program,
    pub text: String,
    /// Variables drawn by this program, in plan order.
    pub draws: Vec<String>,
    /// Variables drawn by earlier programs that this one reads as data.
    pub handoffs: Vec<String>,
}

struct Layout<'a> {
    td: Vec<&'a CodeSegment>,
    pdf: Option<&'a CodeSegment>,
    gq: Vec<&'a CodeSegment>,
}

fn layouts(plan: &SamplingPlan) -> Vec<Layout<'_>> {
    let mut out: Vec<Layout> = Vec::new();
    let mut leading = Vec::new();
    for s in &plan.segments {
        match (s.label, out.last_mut()) {
            (Label::Pdf, _) => out.push(Layout {
                td: std::mem::take(&mut leading),
                pdf: Some(s),
                gq: Vec::new(),
            }),
            (Label::Rng, Some(l)) => l.gq.push(s),
            (Label::Rng, None) => leading.push(s),
        }
    }
    if out.is_empty() {
        out.push(Layout {
            td: Vec::new(),
            pdf: None,
            gq: leading,
        });
    }
    out
}

/// Declares segment locals once per program. A local whose name is taken by
/// another block gets a fresh name inside the segment.
struct Scope {
    taken: BTreeMap<String, BlockKind>,
}

impl Scope {
    fn fresh(&self, base: &str) -> String {
        (1..)
            .map(|k| format!("{base}_{k}"))
            .find(|n| !self.taken.contains_key(n))
            .unwrap()
    }

    /// Declarations and statements for `segs` placed in `block`.
    fn place(&mut self, segs: &[&CodeSegment], block: BlockKind, with_targets: bool) -> (Vec<Decl>, Vec<Stmt>) {
        let mut decls = Vec::new();
        let mut stmts = Vec::new();
        for seg in segs {
            let mut seg = (*seg).clone();
            let mut map = BTreeMap::new();
            for d in seg.locals() {
                match self.taken.get(&d.name) {
                    Some(b) if *b == block => {}
                    Some(_) => {
                        let n = self.fresh(&d.name);
                        self.taken.insert(n.clone(), block);
                        map.insert(d.name.clone(), n);
                    }
                    None => {
                        self.taken.insert(d.name.clone(), block);
                    }
                }
            }
            seg.rename(&map);
            let n = seg.target_vars.len();
            let (targets, locals) = seg.decls.split_at(n);
            if with_targets {
                for d in targets {
                    self.taken.insert(d.name.clone(), block);
                    decls.push(d.clone());
                }
            }
            for d in locals {
                if !decls.iter().any(|x| x.name == d.name) {
                    decls.push(d.clone());
                }
            }
            stmts.extend(seg.statements);
        }
        (decls, stmts)
    }
}

fn decl_stmt(d: Decl) -> Stmt {
    Stmt {
        id: 0,
        kind: StmtKind::Decl(d),
    }
}

fn block(kind: BlockKind, decls: Vec<Decl>, stmts: Vec<Stmt>) -> Option<Block> {
    let stmts: Vec<Stmt> = decls.into_iter().map(decl_stmt).chain(stmts).collect();
    (!stmts.is_empty()).then_some(Block { kind, stmts })
}

fn finish(blocks: Vec<Block>) -> Result<(Program, String), CodegenError> {
    let text = pretty::blocks_to_string(&blocks);
    let program = parse(&text).map_err(|e| CodegenError::Invalid {
        message: e.to_string(),
        text: text.clone(),
    })?;
    Ok((program, text))
}

/// Data declarations of `prog` that the plan does not draw.
fn covariate_decls(plan: &SamplingPlan, prog: &Program) -> Vec<Decl> {
    let drawn = plan.drawn();
    prog.declared_in(BlockKind::Data)
        .into_iter()
        .filter(|v| !plan.renamed.contains_key(v) && !drawn.contains(&v.as_str()))
        .map(|v| prog.symbols[&v].decl.clone())
        .collect()
}

/// Lay the plan out as programs named `<stem>_1`, `<stem>_2`, ...: one per
/// PDF segment, or a single program when every segment is RNG.
pub fn synthesize_programs(plan: &SamplingPlan, prog: &Program, stem: &str) -> Result<Vec<SynthProgram>, CodegenError> {
    let covariates = covariate_decls(plan, prog);
    let mut earlier: Vec<Decl> = Vec::new();
    let mut out = Vec::new();
    for (k, layout) in layouts(plan).into_iter().enumerate() {
        let mut scope = Scope {
            taken: covariates
                .iter()
                .chain(&earlier)
                .map(|d| (d.name.clone(), BlockKind::Data))
                .collect(),
        };
        let mut blocks = Vec::new();
        let needed: BTreeSet<&str> = layout
            .td
            .iter()
            .chain(layout.pdf.iter())
            .chain(layout.gq.iter())
            .flat_map(|s| s.required_inputs.iter().map(String::as_str))
            .collect();
        let handoffs: Vec<Decl> = earlier
            .iter()
            .filter(|d| needed.contains(d.name.as_str()))
            .cloned()
            .collect();
        blocks.extend(block(
            BlockKind::Data,
            covariates.iter().chain(&handoffs).cloned().collect(),
            Vec::new(),
        ));
        let (d, s) = scope.place(&layout.td, BlockKind::TransformedData, true);
        blocks.extend(block(BlockKind::TransformedData, d, s));
        if let Some(p) = layout.pdf {
            for t in p.decls.iter().take(p.target_vars.len()) {
                scope.taken.insert(t.name.clone(), BlockKind::Parameters);
            }
            blocks.extend(block(
                BlockKind::Parameters,
                p.decls[..p.target_vars.len()].to_vec(),
                Vec::new(),
            ));
            let (d, s) = scope.place(&[p], BlockKind::Model, false);
            blocks.push(Block {
                kind: BlockKind::Model,
                stmts: d.into_iter().map(decl_stmt).chain(s).collect(),
            });
        }
        let (d, s) = scope.place(&layout.gq, BlockKind::GeneratedQuantities, true);
        blocks.extend(block(BlockKind::GeneratedQuantities, d, s));

        let segs: Vec<&CodeSegment> = layout
            .td
            .iter()
            .copied()
            .chain(layout.pdf)
            .chain(layout.gq.iter().copied())
            .collect();
        let (program, text) = finish(blocks)?;
        for s in &segs {
            earlier.push(s.decls[0].clone());
        }
        out.push(SynthProgram {
            name: format!("{stem}_{}", k + 1),
            program,
            text,
            draws: segs.iter().flat_map(|s| s.target_vars.iter().cloned()).collect(),
            handoffs: handoffs.into_iter().map(|d| d.name).collect(),
        });
    }
    Ok(out)
}

/// `program <n> <file>` and `handoff <var> from <i> to <j>` lines.
pub fn chain_manifest(programs: &[SynthProgram]) -> String {
    let mut out = String::new();
    let mut drawn_by: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, p) in programs.iter().enumerate() {
        writeln!(out, "program {} {}.ppl", k + 1, p.name).unwrap();
        for v in &p.draws {
            drawn_by.insert(v, k + 1);
        }
    }
    for (k, p) in programs.iter().enumerate() {
        for v in &p.handoffs {
            writeln!(out, "handoff {v} from {} to {}", drawn_by[v.as_str()], k + 1).unwrap();
        }
    }
    out
}

/// Programs for a prior predictive check.
pub fn synthesize_ppc(
    prior: &SamplingPlan,
    predictive: &SamplingPlan,
    prog: &Program,
) -> Result<Vec<SynthProgram>, CodegenError> {
    let plan = prior_predictive_plan(prior, predictive, prog);
    synthesize_programs(&plan, prog, "ppc")
}

/// Programs and manifest for simulation-based calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct SbcBundle {
    /// Programs that draw `<param>_true` and `<data>_sim`, in chain order.
    /// Empty when the draws are folded into the posterior program.
    pub ppc: Vec<SynthProgram>,
    /// Fits the original model to the simulated data and emits `<param>_lt`
    /// rank indicators.
    pub posterior: SynthProgram,
    pub params: Vec<String>,
    pub draws_per_rank: usize,
    pub manifest: String,
}

impl SbcBundle {
    pub fn programs(&self) -> impl Iterator<Item = &SynthProgram> {
        self.ppc.iter().chain(std::iter::once(&self.posterior))
    }
}

fn indicator_decl(d: &Decl, name: String) -> Decl {
    Decl {
        spelling: TypeSpelling::Int,
        bounds: Bounds {
            lower: None,
            upper: None,
        },
        name,
        dims: d.length().cloned(),
    }
}

pub fn synthesize_sbc(
    prior: &SamplingPlan,
    predictive: &SamplingPlan,
    prog: &Program,
    draws_per_rank: usize,
) -> Result<SbcBundle, CodegenError> {
    let params = prog.declared_in(BlockKind::Parameters);
    let truth: BTreeMap<String, String> = params.iter().map(|p| (p.clone(), format!("{p}_true"))).collect();
    let mut plan = prior_predictive_plan(prior, predictive, prog);
    let sims: BTreeMap<String, String> = plan.renamed.clone();
    plan.rename(&truth);

    let model_blocks: Vec<Block> = prog
        .blocks
        .iter()
        .filter(|b| b.kind != BlockKind::GeneratedQuantities)
        .map(|b| {
            let mut b = b.clone();
            b.stmts.iter_mut().for_each(|s| s.rename(&sims));
            b
        })
        .collect();
    let mut gq_decls = Vec::new();
    let mut gq_stmts = Vec::new();
    for p in &params {
        let d = &prog.symbols[p].decl;
        let lt = format!("{p}_lt");
        gq_decls.push(indicator_decl(d, lt.clone()));
        gq_stmts.push(Stmt {
            id: 0,
            kind: StmtKind::Assign {
                target: LValue { name: lt, index: None },
                value: Expr::binary(crate::frontend::BinOp::Lt, Expr::var(p), Expr::var(&truth[p])),
            },
        });
    }

    let combined = plan.num_pdf() == 0;
    let mut ppc = if combined {
        Vec::new()
    } else {
        synthesize_programs(&plan, prog, "ppc")?
    };
    let truth_decls: Vec<Decl> = plan.segments.iter().map(|s| s.decls[0].clone()).collect();

    // Names declared by the model are off limits for segment locals.
    let mut taken: BTreeMap<String, BlockKind> = BTreeMap::new();
    for b in &model_blocks {
        for s in &b.stmts {
            if let StmtKind::Decl(d) = &s.kind {
                taken.insert(d.name.clone(), BlockKind::Data);
            }
        }
    }
    let mut blocks = Vec::new();
    let mut handoffs = Vec::new();
    if combined {
        let covariates = covariate_decls(&plan, prog);
        for d in &covariates {
            taken.insert(d.name.clone(), BlockKind::Data);
        }
        blocks.extend(block(BlockKind::Data, covariates, Vec::new()));
        let mut scope = Scope { taken };
        let segs: Vec<&CodeSegment> = plan.segments.iter().collect();
        let (mut d, mut s) = scope.place(&segs, BlockKind::TransformedData, true);
        if let Some(orig) = model_blocks.iter().find(|b| b.kind == BlockKind::TransformedData) {
            for st in &orig.stmts {
                match &st.kind {
                    StmtKind::Decl(x) => d.push(x.clone()),
                    _ => s.push(st.clone()),
                }
            }
        }
        blocks.extend(block(BlockKind::TransformedData, d, s));
        blocks.extend(
            model_blocks
                .iter()
                .filter(|b| !matches!(b.kind, BlockKind::Data | BlockKind::TransformedData))
                .cloned(),
        );
    } else {
        let mut data = model_blocks
            .iter()
            .find(|b| b.kind == BlockKind::Data)
            .cloned()
            .unwrap_or(Block {
                kind: BlockKind::Data,
                stmts: Vec::new(),
            });
        for d in &truth_decls {
            if truth.values().any(|t| *t == d.name) {
                data.stmts.push(decl_stmt(d.clone()));
                handoffs.push(d.name.clone());
            } else if sims.values().any(|t| *t == d.name) {
                handoffs.push(d.name.clone());
            }
        }
        blocks.push(data);
        blocks.extend(model_blocks.iter().filter(|b| b.kind != BlockKind::Data).cloned());
    }
    blocks.extend(block(BlockKind::GeneratedQuantities, gq_decls, gq_stmts));
    let (program, text) = finish(blocks)?;
    let name = if combined { "sbc" } else { "posterior" };
    let posterior = SynthProgram {
        name: name.to_string(),
        program,
        text,
        draws: params.clone(),
        handoffs,
    };

    let mut manifest = String::new();
    if !ppc.is_empty() {
        let mut all = std::mem::take(&mut ppc);
        all.push(posterior.clone());
        manifest.push_str(&chain_manifest(&all));
        all.pop();
        ppc = all;
    } else {
        writeln!(manifest, "program 1 {name}.ppl").unwrap();
    }
    for p in &params {
        writeln!(manifest, "ranks var={p} draws={draws_per_rank}").unwrap();
    }
    Ok(SbcBundle {
        ppc,
        posterior,
        params,
        draws_per_rank,
        manifest,
    })
}
