//! Control-flow graph, reaching definitions and statement dependencies.
//!
//! Arrays are monolithic: writing `x[i]` is a weak update that adds a
//! definition of `x` without killing earlier ones. Control dependence is
//! structural, so a statement depends on every `for`/`if` that encloses it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::frontend::{free_vars, own_vars, pretty, BlockKind, Program, Stmt, StmtId, StmtKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Entry,
    Exit,
    Stmt(StmtId),
    /// Merge point after the branches of an `if`.
    Join(StmtId),
}

/// A variable definition made at a CFG node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Definition {
    pub node: usize,
    pub var: String,
    /// Strong definitions kill earlier definitions of the same variable.
    pub strong: bool,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub nodes: Vec<Node>,
    pub edges: BTreeSet<(usize, usize)>,
    /// Edges from the end of a loop body back to its header.
    pub back_edges: BTreeSet<(usize, usize)>,
    pub defs: Vec<Vec<Definition>>,
    pub uses: Vec<BTreeSet<String>>,
}

pub const ENTRY: usize = 0;
pub const EXIT: usize = 1;

impl Cfg {
    pub fn successors(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((n, 0)..(n + 1, 0)).map(|&(_, b)| b)
    }

    pub fn predecessors(&self, n: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == n).map(|e| e.0).collect()
    }

    pub fn node_of(&self, id: StmtId) -> Option<usize> {
        self.nodes.iter().position(|n| *n == Node::Stmt(id))
    }

    /// Reverse postorder from the entry node.
    pub fn reverse_postorder(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut post = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(ENTRY, self.successors(ENTRY).collect::<Vec<_>>())];
        seen[ENTRY] = true;
        while let Some((n, succs)) = stack.last_mut() {
            if let Some(next) = succs.pop() {
                if !seen[next] {
                    seen[next] = true;
                    let s = self.successors(next).collect();
                    stack.push((next, s));
                }
            } else {
                post.push(*n);
                stack.pop();
            }
        }
        post.reverse();
        post
    }
}

struct CfgBuilder<'a> {
    prog: &'a Program,
    cfg: Cfg,
}

impl CfgBuilder<'_> {
    fn add(&mut self, node: Node, defs: Vec<(String, bool)>, uses: BTreeSet<String>) -> usize {
        let n = self.cfg.nodes.len();
        self.cfg.nodes.push(node);
        self.cfg.defs.push(
            defs.into_iter()
                .map(|(var, strong)| Definition { node: n, var, strong })
                .collect(),
        );
        self.cfg.uses.push(uses);
        n
    }

    fn connect(&mut self, from: &[usize], to: usize) {
        for &f in from {
            self.cfg.edges.insert((f, to));
        }
    }

    fn seq(&mut self, stmts: &[Stmt], mut preds: Vec<usize>) -> Vec<usize> {
        for s in stmts {
            preds = self.stmt(s, preds);
        }
        preds
    }

    fn stmt(&mut self, s: &Stmt, preds: Vec<usize>) -> Vec<usize> {
        let (defs, uses) = def_use(s);
        let n = self.add(Node::Stmt(s.id), defs, uses);
        self.connect(&preds, n);
        match &s.kind {
            StmtKind::For { body, .. } => {
                let ends = self.seq(body, vec![n]);
                for &e in &ends {
                    self.cfg.back_edges.insert((e, n));
                }
                self.connect(&ends, n);
                vec![n]
            }
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                let mut ends = self.seq(then_branch, vec![n]);
                match else_branch {
                    Some(b) => ends.extend(self.seq(b, vec![n])),
                    None => ends.push(n),
                }
                let j = self.add(Node::Join(s.id), Vec::new(), BTreeSet::new());
                self.connect(&ends, j);
                vec![j]
            }
            _ => vec![n],
        }
    }
}

/// Definitions and value-level uses of a single CFG node.
fn def_use(s: &Stmt) -> (Vec<(String, bool)>, BTreeSet<String>) {
    match &s.kind {
        StmtKind::Decl(d) => (vec![(d.name.clone(), true)], BTreeSet::new()),
        StmtKind::Assign { target, value } => {
            let mut uses = value.vars();
            if let Some(i) = &target.index {
                i.collect_vars(&mut uses);
            }
            (vec![(target.name.clone(), target.index.is_none())], uses)
        }
        StmtKind::For { var, lo, hi, .. } => {
            let mut uses = lo.vars();
            hi.collect_vars(&mut uses);
            (vec![(var.clone(), true)], uses)
        }
        StmtKind::If { cond, .. } => (Vec::new(), cond.vars()),
        StmtKind::TargetIncrement(_) | StmtKind::Tilde { .. } => (Vec::new(), free_vars(s)),
        StmtKind::Reject(_) => (Vec::new(), BTreeSet::new()),
    }
}

/// Control-flow graph over every block, in execution order.
pub fn build_cfg(prog: &Program) -> Cfg {
    let mut b = CfgBuilder {
        prog,
        cfg: Cfg {
            nodes: Vec::new(),
            edges: BTreeSet::new(),
            back_edges: BTreeSet::new(),
            defs: Vec::new(),
            uses: Vec::new(),
        },
    };
    b.add(Node::Entry, Vec::new(), BTreeSet::new());
    b.add(Node::Exit, Vec::new(), BTreeSet::new());
    let mut preds = vec![ENTRY];
    for kind in BlockKind::ALL {
        preds = b.seq(b.prog.block_stmts(kind), preds);
    }
    b.connect(&preds, EXIT);
    b.cfg
}

/// Definitions reaching the entry and exit of each CFG node.
#[derive(Clone, Debug)]
pub struct ReachingDefs {
    pub defs: Vec<Definition>,
    pub entry: Vec<BTreeSet<usize>>,
    pub exit: Vec<BTreeSet<usize>>,
}

impl ReachingDefs {
    /// Definitions of `var` reaching the entry of `node`.
    pub fn reaching<'a>(&'a self, node: usize, var: &'a str) -> impl Iterator<Item = &'a Definition> + 'a {
        self.entry[node]
            .iter()
            .map(|&d| &self.defs[d])
            .filter(move |d| d.var == var)
    }
}

/// Least fixed point of the gen/kill equations, by worklist in reverse postorder.
pub fn reaching_definitions(cfg: &Cfg) -> ReachingDefs {
    let defs: Vec<Definition> = cfg.defs.iter().flatten().cloned().collect();
    let n = cfg.nodes.len();
    let mut gen = vec![BTreeSet::new(); n];
    let mut kill = vec![BTreeSet::new(); n];
    for (k, d) in defs.iter().enumerate() {
        gen[d.node].insert(k);
        if d.strong {
            for (j, other) in defs.iter().enumerate() {
                if other.var == d.var && other.node != d.node {
                    kill[d.node].insert(j);
                }
            }
        }
    }
    let order = cfg.reverse_postorder();
    let preds: Vec<Vec<usize>> = (0..n).map(|k| cfg.predecessors(k)).collect();
    let mut entry = vec![BTreeSet::new(); n];
    let mut exit = vec![BTreeSet::new(); n];
    let mut work: std::collections::VecDeque<usize> = order.iter().copied().collect();
    let mut queued = vec![false; n];
    for &k in &order {
        queued[k] = true;
    }
    while let Some(k) = work.pop_front() {
        queued[k] = false;
        let mut inn = BTreeSet::new();
        for &p in &preds[k] {
            inn.extend(exit[p].iter().copied());
        }
        let mut out: BTreeSet<usize> = inn.difference(&kill[k]).copied().collect();
        out.extend(gen[k].iter().copied());
        entry[k] = inn;
        if out != exit[k] {
            exit[k] = out;
            for s in cfg.successors(k) {
                if !queued[s] {
                    queued[s] = true;
                    work.push_back(s);
                }
            }
        }
    }
    ReachingDefs { defs, entry, exit }
}

/// Transitively closed statement dependencies. `(a, b)` means `a` influences `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyGraph {
    pub nodes: BTreeSet<StmtId>,
    pub edges: BTreeSet<(StmtId, StmtId)>,
    /// Direct data and control dependencies before closure.
    pub direct: BTreeSet<(StmtId, StmtId)>,
}

impl DependencyGraph {
    /// Statements that `id` depends on.
    pub fn deps_of(&self, id: StmtId) -> BTreeSet<StmtId> {
        self.edges.iter().filter(|e| e.1 == id).map(|e| e.0).collect()
    }

    pub fn depends(&self, on: StmtId, id: StmtId) -> bool {
        self.edges.contains(&(on, id))
    }

    pub fn to_dot(&self, prog: &Program) -> String {
        let mut out = String::from("digraph dependencies {\n  node [shape=box];\n");
        for &id in &self.nodes {
            let label = prog
                .stmt(id)
                .map(first_line)
                .unwrap_or_default()
                .replace('\\', "\\\\")
                .replace('"', "\\\"");
            writeln!(out, "  s{id} [label=\"{id}: {label}\"];").unwrap();
        }
        for (a, b) in &self.direct {
            writeln!(out, "  s{a} -> s{b};").unwrap();
        }
        out.push_str("}\n");
        out
    }
}

fn first_line(s: &Stmt) -> String {
    match &s.kind {
        StmtKind::For { var, lo, hi, .. } => format!(
            "for ({var} in {}:{})",
            pretty::expr_to_string(lo),
            pretty::expr_to_string(hi)
        ),
        StmtKind::If { cond, .. } => format!("if ({})", pretty::expr_to_string(cond)),
        _ => pretty::stmt_summary(s),
    }
}

/// Reflexive pairs are dropped, so a loop-carried update does not depend on itself.
pub fn transitive_closure(edges: &BTreeSet<(StmtId, StmtId)>) -> BTreeSet<(StmtId, StmtId)> {
    let mut succ: BTreeMap<StmtId, BTreeSet<StmtId>> = BTreeMap::new();
    for &(a, b) in edges {
        succ.entry(a).or_default().insert(b);
    }
    let mut out = BTreeSet::new();
    for &start in succ.keys() {
        let mut stack: Vec<StmtId> = succ[&start].iter().copied().collect();
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                if let Some(next) = succ.get(&n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        out.extend(seen.into_iter().filter(|&n| n != start).map(|n| (start, n)));
    }
    out
}

pub fn dependency_graph(prog: &Program, cfg: &Cfg) -> DependencyGraph {
    let rd = reaching_definitions(cfg);
    let mut direct = BTreeSet::new();
    for (k, node) in cfg.nodes.iter().enumerate() {
        let Node::Stmt(id) = *node else { continue };
        for var in &cfg.uses[k] {
            for d in rd.reaching(k, var) {
                if let Node::Stmt(def_id) = cfg.nodes[d.node] {
                    if def_id != id {
                        direct.insert((def_id, id));
                    }
                }
            }
        }
        for &c in &prog.info[id].enclosing {
            direct.insert((c, id));
        }
    }
    DependencyGraph {
        nodes: (0..prog.num_statements()).collect(),
        edges: transitive_closure(&direct),
        direct,
    }
}

/// Convenience: CFG plus dependency graph.
pub fn analyze(prog: &Program) -> DependencyGraph {
    dependency_graph(prog, &build_cfg(prog))
}

/// Data and parameter variables that a statement's value depends on,
/// traced through intermediate assignments.
pub fn dependent_vars(stmt: &Stmt, dep: &DependencyGraph, prog: &Program) -> BTreeSet<String> {
    let mut vars = own_vars(stmt);
    for d in dep.deps_of(stmt.id) {
        if let Some(s) = prog.stmt(d) {
            vars.extend(own_vars(s));
        }
    }
    vars.retain(|v| prog.is_input(v));
    vars
}

/// Whether a statement may appear in a slice: no densities, and no
/// declarations (inputs are bound externally and locals are allocated on
/// first write).
fn sliceable(s: &Stmt) -> bool {
    !s.is_density() && !matches!(s.kind, StmtKind::Decl(_))
}

/// Ids of the statements the requested ones depend on, excluding densities
/// and declarations.
pub fn slice_ids(ids: &BTreeSet<StmtId>, dep: &DependencyGraph, prog: &Program) -> BTreeSet<StmtId> {
    let mut out = BTreeSet::new();
    for &id in ids {
        for d in dep.deps_of(id) {
            if prog.stmt(d).is_some_and(sliceable) {
                out.insert(d);
            }
        }
    }
    out
}

/// Copy `stmts`, keeping only statements for which `keep` holds and the
/// control structure around them. Controls whose pruned body is empty are
/// dropped.
pub fn prune(stmts: &[Stmt], keep: &dyn Fn(&Stmt) -> bool) -> Vec<Stmt> {
    let mut out = Vec::new();
    for s in stmts {
        match &s.kind {
            StmtKind::For { var, lo, hi, body } => {
                let body = prune(body, keep);
                if !body.is_empty() {
                    out.push(Stmt {
                        id: s.id,
                        kind: StmtKind::For {
                            var: var.clone(),
                            lo: lo.clone(),
                            hi: hi.clone(),
                            body,
                        },
                    });
                }
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let t = prune(then_branch, keep);
                let e = else_branch.as_ref().map(|b| prune(b, keep)).filter(|b| !b.is_empty());
                if !t.is_empty() || e.is_some() {
                    out.push(Stmt {
                        id: s.id,
                        kind: StmtKind::If {
                            cond: cond.clone(),
                            then_branch: t,
                            else_branch: e,
                        },
                    });
                }
            }
            _ if keep(s) => out.push(s.clone()),
            _ => {}
        }
    }
    out
}

/// Statements that the requested statements depend on, in source order and
/// wrapped in their enclosing control flow. Each statement appears once.
pub fn backward_slice(ids: &BTreeSet<StmtId>, dep: &DependencyGraph, prog: &Program) -> Vec<Stmt> {
    let keep = slice_ids(ids, dep, prog);
    let mut out = Vec::new();
    for b in &prog.blocks {
        out.extend(prune(&b.stmts, &|s| keep.contains(&s.id)));
    }
    out
}
