//! Factors, the bipartite factor graph, and its restrictions.
//!
//! A factor is a statement that changes the density (`target +=`, `~` or
//! `reject`) together with the statements it depends on. Its neighbors are
//! the data and parameter variables it depends on after tracing through
//! intermediates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};
use std::str::FromStr;

use crate::dataflow::{dependent_vars, DependencyGraph};
use crate::frontend::{builtins, parse_stmt, pretty, BlockKind, Expr, Program, Stmt, StmtId, StmtKind};

/// Factor identifier `F<line>`; a second factor on the same line is `F<line>_1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactorId {
    pub line: u32,
    pub index: u32,
}

impl FactorId {
    pub fn new(line: u32) -> Self {
        FactorId { line, index: 0 }
    }
}

impl fmt::Display for FactorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            0 => write!(f, "F{}", self.line),
            k => write!(f, "F{}_{k}", self.line),
        }
    }
}

impl FromStr for FactorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("bad factor id `{s}`");
        let rest = s.strip_prefix('F').ok_or_else(bad)?;
        let (line, index) = match rest.split_once('_') {
            Some((l, k)) => (l, k.parse().map_err(|_| bad())?),
            None => (rest, 0),
        };
        Ok(FactorId {
            line: line.parse().map_err(|_| bad())?,
            index,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FactorForm {
    Target,
    Tilde,
    Reject,
}

impl FactorForm {
    pub fn name(self) -> &'static str {
        match self {
            FactorForm::Target => "target",
            FactorForm::Tilde => "tilde",
            FactorForm::Reject => "reject",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        match s {
            "target" => Some(FactorForm::Target),
            "tilde" => Some(FactorForm::Tilde),
            "reject" => Some(FactorForm::Reject),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Factor {
    pub id: FactorId,
    /// The density statement. Statements read back from a document have id 0.
    pub stmt: Stmt,
    pub deps: BTreeSet<StmtId>,
    pub form: FactorForm,
    pub pretty: String,
    /// Inputs removed by a restriction and treated as observed constants.
    pub held: BTreeSet<String>,
    /// Never eligible as a recognizable edge: the statement sits inside
    /// control flow, or its arguments depend on its own variate.
    pub opaque: bool,
}

impl PartialEq for Factor {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.stmt.kind == other.stmt.kind
            && self.deps == other.deps
            && self.form == other.form
            && self.pretty == other.pretty
            && self.held == other.held
            && self.opaque == other.opaque
    }
}

impl Factor {
    /// The variable in variate position of a density call or `~`, if any.
    pub fn variate(&self) -> Option<&str> {
        variate_of(&self.stmt)
    }
}

pub fn variate_of(stmt: &Stmt) -> Option<&str> {
    fn base(e: &Expr) -> Option<&str> {
        match e {
            Expr::Var(v) | Expr::Index(v, _) => Some(v.as_str()),
            _ => None,
        }
    }
    match &stmt.kind {
        StmtKind::Tilde { variate, .. } => base(variate),
        StmtKind::TargetIncrement(Expr::Call(name, args)) if builtins::is_density_call(name) => {
            args.first().and_then(base)
        }
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    Data,
    Param,
}

impl VarKind {
    pub fn name(self) -> &'static str {
        match self {
            VarKind::Data => "data",
            VarKind::Param => "param",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FactorGraph {
    pub variables: BTreeMap<String, VarKind>,
    pub factors: BTreeMap<FactorId, Factor>,
    pub edges: BTreeSet<(String, FactorId)>,
}

impl FactorGraph {
    /// Variables adjacent to `f`.
    pub fn nei(&self, f: FactorId) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter(|(_, g)| *g == f)
            .map(|(v, _)| v.as_str())
            .collect()
    }

    /// Factors adjacent to `v`.
    pub fn factors_of(&self, v: &str) -> BTreeSet<FactorId> {
        self.edges.iter().filter(|(w, _)| w == v).map(|(_, f)| *f).collect()
    }

    pub fn has_edge(&self, v: &str, f: FactorId) -> bool {
        self.edges.contains(&(v.to_string(), f))
    }

    pub fn vars_of_kind(&self, kind: VarKind) -> BTreeSet<String> {
        self.variables
            .iter()
            .filter(|(_, k)| **k == kind)
            .map(|(v, _)| v.clone())
            .collect()
    }

    /// Data variables that appear as the variate of some factor, together
    /// with every data neighbor of data-touching factors that have no data
    /// variate. The remaining data variables are covariates.
    pub fn modeled_data(&self) -> BTreeSet<String> {
        let data = self.vars_of_kind(VarKind::Data);
        let mut out = BTreeSet::new();
        for f in self.factors.values() {
            let nei: BTreeSet<String> = self.nei(f.id).into_iter().map(String::from).collect();
            let touched: BTreeSet<&String> = nei.intersection(&data).collect();
            if touched.is_empty() {
                continue;
            }
            match f.variate().filter(|v| data.contains(*v) && nei.contains(*v)) {
                Some(v) => {
                    out.insert(v.to_string());
                }
                None => out.extend(touched.into_iter().cloned()),
            }
        }
        out
    }

    /// Structural sanity: every edge joins a known variable to a known factor.
    pub fn check(&self) -> Result<(), String> {
        for (v, f) in &self.edges {
            if !self.variables.contains_key(v) {
                return Err(format!("edge references unknown variable `{v}`"));
            }
            if !self.factors.contains_key(f) {
                return Err(format!("edge references unknown factor `{f}`"));
            }
        }
        Ok(())
    }

    /// Canonical line-oriented document.
    pub fn serialize(&self) -> String {
        let mut out = String::from("factorgraph v1\n");
        for (v, k) in &self.variables {
            writeln!(out, "var {v} kind={}", k.name()).unwrap();
        }
        for f in self.factors.values() {
            let deps: Vec<String> = f.deps.iter().map(|d| d.to_string()).collect();
            writeln!(
                out,
                "factor {} form={} stmt=\"{}\" deps={}",
                f.id,
                f.form.name(),
                escape(&f.pretty),
                deps.join(",")
            )
            .unwrap();
        }
        for (v, f) in &self.edges {
            writeln!(out, "edge {v} {f}").unwrap();
        }
        for f in self.factors.values() {
            for h in &f.held {
                writeln!(out, "held {h} {}", f.id).unwrap();
            }
        }
        for f in self.factors.values().filter(|f| f.opaque) {
            writeln!(out, "opaque {}", f.id).unwrap();
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<FactorGraph, DocumentError> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
        match lines.next() {
            Some((_, "factorgraph v1")) => {}
            _ => return Err(DocumentError::new(1, "expected header `factorgraph v1`")),
        }
        let mut g = FactorGraph::default();
        for (n, line) in lines {
            let err = |m: String| DocumentError::new(n, m);
            if line.trim().is_empty() {
                continue;
            }
            let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
            match head {
                "var" => {
                    let (name, kind) = rest
                        .split_once(" kind=")
                        .ok_or_else(|| err("malformed var line".into()))?;
                    let kind = match kind {
                        "data" => VarKind::Data,
                        "param" => VarKind::Param,
                        k => return Err(err(format!("unknown variable kind `{k}`"))),
                    };
                    if g.variables.insert(name.to_string(), kind).is_some() {
                        return Err(err(format!("duplicate variable `{name}`")));
                    }
                }
                "factor" => {
                    let f = parse_factor_line(rest).map_err(err)?;
                    if g.factors.insert(f.id, f).is_some() {
                        return Err(err("duplicate factor".into()));
                    }
                }
                "opaque" => {
                    let f: FactorId = rest.parse().map_err(err)?;
                    match g.factors.get_mut(&f) {
                        Some(f) => f.opaque = true,
                        None => return Err(err(format!("opaque references unknown factor `{f}`"))),
                    }
                }
                "edge" | "held" => {
                    let (v, f) = rest
                        .split_once(' ')
                        .ok_or_else(|| err(format!("malformed {head} line")))?;
                    let f: FactorId = f.parse().map_err(err)?;
                    if !g.factors.contains_key(&f) {
                        return Err(err(format!("{head} references unknown factor `{f}`")));
                    }
                    if head == "edge" {
                        if !g.variables.contains_key(v) {
                            return Err(err(format!("edge references unknown variable `{v}`")));
                        }
                        g.edges.insert((v.to_string(), f));
                    } else {
                        g.factors.get_mut(&f).unwrap().held.insert(v.to_string());
                    }
                }
                other => return Err(err(format!("unknown record `{other}`"))),
            }
        }
        Ok(g)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph factorgraph {\n");
        for (v, k) in &self.variables {
            let style = if *k == VarKind::Data { ", style=filled" } else { "" };
            writeln!(out, "  \"{v}\" [shape=ellipse{style}];").unwrap();
        }
        for f in self.factors.values() {
            writeln!(
                out,
                "  \"{}\" [shape=box, label=\"{}: {}\"];",
                f.id,
                f.id,
                escape(&f.pretty)
            )
            .unwrap();
        }
        for (v, f) in &self.edges {
            writeln!(out, "  \"{v}\" -- \"{f}\";").unwrap();
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn parse_factor_line(rest: &str) -> Result<Factor, String> {
    let (id, rest) = rest.split_once(' ').ok_or("malformed factor line")?;
    let id: FactorId = id.parse()?;
    let rest = rest.strip_prefix("form=").ok_or("expected form=")?;
    let (form, rest) = rest.split_once(' ').ok_or("malformed factor line")?;
    let form = FactorForm::from_name(form).ok_or_else(|| format!("unknown form `{form}`"))?;
    let rest = rest.strip_prefix("stmt=\"").ok_or("expected stmt=\"")?;
    let mut pretty = String::new();
    let mut chars = rest.char_indices();
    let end = loop {
        match chars.next() {
            Some((_, '\\')) => match chars.next() {
                Some((_, c)) => pretty.push(c),
                None => return Err("unterminated stmt string".into()),
            },
            Some((k, '"')) => break k,
            Some((_, c)) => pretty.push(c),
            None => return Err("unterminated stmt string".into()),
        }
    };
    let deps_text = rest[end + 1..].strip_prefix(" deps=").ok_or("expected deps=")?;
    let deps = deps_text
        .split(',')
        .filter(|d| !d.is_empty())
        .map(|d| d.parse().map_err(|_| format!("bad statement id `{d}`")))
        .collect::<Result<BTreeSet<StmtId>, String>>()?;
    let stmt = parse_stmt(&format!("{pretty};")).map_err(|e| format!("bad factor statement: {e}"))?;
    Ok(Factor {
        id,
        stmt,
        deps,
        form,
        pretty,
        held: BTreeSet::new(),
        opaque: false,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct DocumentError {
    pub line: usize,
    pub message: String,
}

impl DocumentError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        DocumentError {
            line,
            message: message.into(),
        }
    }
}

/// One factor per density statement of the model block, in source order.
pub fn extract_factors(prog: &Program, dep: &DependencyGraph) -> Vec<Factor> {
    let mut out: Vec<Factor> = Vec::new();
    let mut per_line: BTreeMap<u32, u32> = BTreeMap::new();
    for block in prog.blocks.iter().filter(|b| b.kind == BlockKind::Model) {
        for top in &block.stmts {
            top.walk(&mut |s| {
                let form = match s.kind {
                    StmtKind::TargetIncrement(_) => FactorForm::Target,
                    StmtKind::Tilde { .. } => FactorForm::Tilde,
                    StmtKind::Reject(_) => FactorForm::Reject,
                    _ => return,
                };
                let line = prog.span(s.id).line;
                let slot = per_line.entry(line).or_insert(0);
                let id = FactorId { line, index: *slot };
                *slot += 1;
                let deps = dep.deps_of(s.id);
                let opaque = !prog.info[s.id].enclosing.is_empty()
                    || variate_of(s).is_some_and(|v| {
                        deps.iter().filter_map(|&d| prog.stmt(d)).any(|d| {
                            matches!(d.kind, StmtKind::Assign { .. }) && dependent_vars(d, dep, prog).contains(v)
                        })
                    });
                out.push(Factor {
                    id,
                    stmt: s.clone(),
                    deps,
                    form,
                    pretty: pretty::stmt_summary(s),
                    held: BTreeSet::new(),
                    opaque,
                });
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Warning {
    ConstantFactor(FactorId),
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::ConstantFactor(id) => {
                write!(f, "factor {id} depends on no variable and was dropped")
            }
        }
    }
}

/// Factor graph over data and parameter variables. Factors with no
/// neighbors are constant and are dropped with a warning.
pub fn build_factor_graph(prog: &Program, dep: &DependencyGraph) -> (FactorGraph, Vec<Warning>) {
    let mut g = FactorGraph::default();
    for v in prog.declared_in(BlockKind::Data) {
        g.variables.insert(v, VarKind::Data);
    }
    for v in prog.declared_in(BlockKind::Parameters) {
        g.variables.insert(v, VarKind::Param);
    }
    let mut warnings = Vec::new();
    for f in extract_factors(prog, dep) {
        let nei: BTreeSet<String> = dependent_vars(&f.stmt, dep, prog)
            .into_iter()
            .filter(|v| g.variables.contains_key(v))
            .collect();
        if nei.is_empty() {
            warnings.push(Warning::ConstantFactor(f.id));
            continue;
        }
        for v in nei {
            g.edges.insert((v, f.id));
        }
        g.factors.insert(f.id, f);
    }
    (g, warnings)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RestrictError {
    #[error("parameter `{0}` has no prior")]
    NoPrior(String),
    #[error("data variable `{0}` has no likelihood")]
    NoLikelihood(String),
}

/// Keep `keep` factors and `vars` vertices; every other neighbor of a kept
/// factor becomes a held-constant input.
fn restrict(g: &FactorGraph, vars: &BTreeSet<String>, keep: &dyn Fn(&Factor) -> bool) -> FactorGraph {
    let mut out = FactorGraph::default();
    for v in vars {
        out.variables.insert(v.clone(), g.variables[v]);
    }
    for f in g.factors.values().filter(|f| keep(f)) {
        let mut f = f.clone();
        for v in g.nei(f.id) {
            if vars.contains(v) {
                out.edges.insert((v.to_string(), f.id));
            } else {
                f.held.insert(v.to_string());
            }
        }
        out.factors.insert(f.id, f);
    }
    out
}

fn require_covered(g: &FactorGraph, err: fn(String) -> RestrictError) -> Result<(), RestrictError> {
    match g.variables.keys().find(|v| g.factors_of(v).is_empty()) {
        Some(v) => Err(err(v.clone())),
        None => Ok(()),
    }
}

/// Graph for prior sampling: modeled data variables and the factors that
/// touch them are removed, covariates are held constant.
pub fn restrict_for_prior(g: &FactorGraph, data_vars: &BTreeSet<String>) -> Result<FactorGraph, RestrictError> {
    let modeled: BTreeSet<String> = g.modeled_data().intersection(data_vars).cloned().collect();
    let vars: BTreeSet<String> = g
        .variables
        .keys()
        .filter(|v| !data_vars.contains(*v))
        .cloned()
        .collect();
    let out = restrict(g, &vars, &|f| g.nei(f.id).iter().all(|v| !modeled.contains(*v)));
    require_covered(&out, RestrictError::NoPrior)?;
    Ok(out)
}

/// Graph for predictive sampling: parameters and covariates become
/// held-constant inputs and only factors touching modeled data remain.
pub fn restrict_for_predictive(g: &FactorGraph, param_vars: &BTreeSet<String>) -> Result<FactorGraph, RestrictError> {
    let modeled: BTreeSet<String> = g
        .modeled_data()
        .into_iter()
        .filter(|v| !param_vars.contains(v))
        .collect();
    let out = restrict(g, &modeled, &|f| g.nei(f.id).iter().any(|v| modeled.contains(*v)));
    require_covered(&out, RestrictError::NoLikelihood)?;
    Ok(out)
}

/// The whole model: parameters and modeled data are sampled, covariates held.
pub fn restrict_full(g: &FactorGraph) -> FactorGraph {
    let modeled = g.modeled_data();
    let vars: BTreeSet<String> = g
        .variables
        .iter()
        .filter(|(v, k)| **k == VarKind::Param || modeled.contains(*v))
        .map(|(v, _)| v.clone())
        .collect();
    restrict(g, &vars, &|_| true)
}
