//! From factor graph to DAG.
//!
//! Every factor is assigned to exactly one neighboring variable (an edge
//! selection set). Contracting the selected edges yields a directed graph in
//! which the other neighbors of a variable's factors become its parents. The
//! sound selection sets are enumerated with a SAT encoding, narrowed by
//! syntactically recognizable distributions and by user answers about
//! constant normalization, and one is chosen canonically.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::{self, Write};

use crate::factorgraph::{FactorForm, FactorGraph, FactorId};
use crate::frontend::{builtins, Expr, StmtKind};
use crate::satcore::{enumerate_projected, to_cnf, Atom, CnfInstance, Formula, Universe};

/// A set of (variable, factor) edges, each factor appearing at most once.
/// Ordered lexicographically by its sorted edge list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeSelectionSet(pub BTreeSet<(String, FactorId)>);

impl EdgeSelectionSet {
    /// Factors assigned to `v`.
    pub fn assigned(&self, v: &str) -> BTreeSet<FactorId> {
        self.0.iter().filter(|(w, _)| w == v).map(|(_, f)| *f).collect()
    }

    pub fn contains(&self, v: &str, f: FactorId) -> bool {
        self.0.contains(&(v.to_string(), f))
    }
}

impl fmt::Display for EdgeSelectionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(v, g)| format!("({v}, {g})")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

impl FromIterator<(String, FactorId)> for EdgeSelectionSet {
    fn from_iter<I: IntoIterator<Item = (String, FactorId)>>(iter: I) -> Self {
        EdgeSelectionSet(iter.into_iter().collect())
    }
}

/// An edge whose factor is a builtin distribution statement for its variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Recognized {
    pub var: String,
    pub factor: FactorId,
    pub dist: String,
    pub args: Vec<Expr>,
}

/// Recognizable edges, at most one per variable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecognizableSet {
    pub edges: BTreeMap<String, Recognized>,
}

impl RecognizableSet {
    pub fn contains(&self, v: &str, f: FactorId) -> bool {
        self.edges.get(v).is_some_and(|r| r.factor == f)
    }

    pub fn covers(&self, v: &str) -> bool {
        self.edges.contains_key(v)
    }

    pub fn pairs(&self) -> BTreeSet<(String, FactorId)> {
        self.edges.values().map(|r| (r.var.clone(), r.factor)).collect()
    }
}

/// Match `v ~ dist(args)` or `target += dist_lpdf(v | args)` with a bare
/// variate that does not occur in the arguments.
pub fn match_distribution(kind: &StmtKind) -> Option<(&str, String, &[Expr])> {
    let (variate, dist, args) = match kind {
        StmtKind::Tilde { variate, dist, args } => (variate, dist.clone(), args.as_slice()),
        StmtKind::TargetIncrement(Expr::Call(name, all)) => {
            let (info, fun) = builtins::split_dist_call(name)?;
            if fun != builtins::DistFn::Density {
                return None;
            }
            let (variate, args) = all.split_first()?;
            (variate, info.name.to_string(), args)
        }
        _ => return None,
    };
    builtins::distribution(&dist)?;
    let Expr::Var(v) = variate else { return None };
    if args.iter().any(|a| a.mentions(v)) {
        return None;
    }
    Some((v.as_str(), dist, args))
}

pub fn recognizable_edges(g: &FactorGraph) -> RecognizableSet {
    let mut candidates: BTreeMap<String, Vec<Recognized>> = BTreeMap::new();
    for f in g.factors.values() {
        if f.opaque || f.form == FactorForm::Reject {
            continue;
        }
        let Some((v, dist, args)) = match_distribution(&f.stmt.kind) else {
            continue;
        };
        if !g.has_edge(v, f.id) {
            continue;
        }
        candidates.entry(v.to_string()).or_default().push(Recognized {
            var: v.to_string(),
            factor: f.id,
            dist,
            args: args.to_vec(),
        });
    }
    // A variable in a rejected region is sampled from its density.
    let guarded: BTreeSet<&str> = g
        .factors
        .values()
        .filter(|f| f.form == FactorForm::Reject)
        .flat_map(|f| g.nei(f.id))
        .collect();
    RecognizableSet {
        edges: candidates
            .into_iter()
            .filter(|(v, c)| c.len() == 1 && !guarded.contains(v.as_str()))
            .map(|(v, mut c)| (v, c.pop().unwrap()))
            .collect(),
    }
}

/// Propositional encoding of sound selection sets containing `r`.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub universe: Universe,
    pub formula: Formula,
    pub sel: BTreeMap<(String, FactorId), Atom>,
    pub path: BTreeMap<(String, String), Atom>,
}

impl Encoding {
    pub fn cnf(&self) -> CnfInstance {
        let proj: Vec<Atom> = self.sel.values().copied().collect();
        to_cnf(&self.formula, &self.universe).with_projection(&proj)
    }
}

pub fn encode(g: &FactorGraph, r: &RecognizableSet) -> Encoding {
    let mut universe = Universe::new();
    let mut sel = BTreeMap::new();
    for (v, f) in &g.edges {
        sel.insert((v.clone(), *f), universe.add(format!("Sel_{v}_{f}")));
    }
    let vars: Vec<&String> = g.variables.keys().collect();
    let mut path = BTreeMap::new();
    for a in &vars {
        for b in &vars {
            path.insert(((*a).clone(), (*b).clone()), universe.add(format!("P_{a}_{b}")));
        }
    }
    let s = |v: &str, f: FactorId| Formula::Atom(sel[&(v.to_string(), f)]);
    let p = |a: &str, b: &str| Formula::Atom(path[&(a.to_string(), b.to_string())]);
    let mut rules = Vec::new();
    // 1. acyclic
    for v in &vars {
        rules.push(Formula::not(p(v, v)));
    }
    for f in g.factors.keys() {
        let nei = g.nei(*f);
        // 2. every factor covered
        rules.push(Formula::Or(nei.iter().map(|v| s(v, *f)).collect()));
        // 3. at most once
        for a in &nei {
            for b in &nei {
                if a != b {
                    rules.push(Formula::implies(s(a, *f), Formula::not(s(b, *f))));
                }
            }
        }
        // 7. selecting an edge orients the other neighbors towards it
        for a in &nei {
            for b in &nei {
                if a != b {
                    rules.push(Formula::implies(
                        Formula::And(vec![Formula::not(s(a, *f)), s(b, *f)]),
                        p(a, b),
                    ));
                }
            }
        }
    }
    // 4. every variable covered
    for v in &vars {
        rules.push(Formula::Or(g.factors_of(v).into_iter().map(|f| s(v, f)).collect()));
    }
    for rec in r.edges.values() {
        // 5. recognizable edges included
        rules.push(s(&rec.var, rec.factor));
        // 6. and exclusive for their variable
        for f in g.factors_of(&rec.var) {
            if f != rec.factor {
                rules.push(Formula::not(s(&rec.var, f)));
            }
        }
    }
    // 8. paths compose
    for a in &vars {
        for b in &vars {
            for c in &vars {
                rules.push(Formula::implies(Formula::And(vec![p(a, b), p(b, c)]), p(a, c)));
            }
        }
    }
    Encoding {
        universe,
        formula: Formula::And(rules),
        sel,
        path,
    }
}

/// The set S of sound selection sets containing `r`, in canonical order.
pub fn solve_selection_sets(g: &FactorGraph, r: &RecognizableSet) -> Vec<EdgeSelectionSet> {
    let enc = encode(g, r);
    let by_atom: BTreeMap<Atom, &(String, FactorId)> = enc.sel.iter().map(|(k, a)| (*a, k)).collect();
    let mut out: Vec<EdgeSelectionSet> = enumerate_projected(&enc.cnf())
        .solutions
        .into_iter()
        .map(|sol| sol.into_iter().map(|a| by_atom[&a].clone()).collect())
        .collect();
    out.sort();
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dag {
    pub variables: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
    pub assign: BTreeMap<String, BTreeSet<FactorId>>,
    pub selection: EdgeSelectionSet,
}

impl Dag {
    pub fn parents(&self, v: &str) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter(|(_, b)| b == v)
            .map(|(a, _)| a.as_str())
            .collect()
    }

    pub fn is_root(&self, v: &str) -> bool {
        !self.edges.iter().any(|(_, b)| b == v)
    }

    /// Topological order, ties broken by `key` then name.
    pub fn topo_order(&self, key: &dyn Fn(&str) -> usize) -> Vec<String> {
        let mut indeg: BTreeMap<&str, usize> = self.variables.iter().map(|v| (v.as_str(), 0)).collect();
        for (_, b) in &self.edges {
            *indeg.get_mut(b.as_str()).unwrap() += 1;
        }
        let mut ready: BinaryHeap<Reverse<(usize, &str)>> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(v, _)| Reverse((key(v), *v)))
            .collect();
        let mut out = Vec::with_capacity(self.variables.len());
        while let Some(Reverse((_, v))) = ready.pop() {
            out.push(v.to_string());
            for (a, b) in &self.edges {
                if a == v {
                    let d = indeg.get_mut(b.as_str()).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.push(Reverse((key(b), b.as_str())));
                    }
                }
            }
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dag {\n");
        for v in &self.variables {
            writeln!(out, "  \"{v}\";").unwrap();
        }
        for (a, b) in &self.edges {
            writeln!(out, "  \"{a}\" -> \"{b}\";").unwrap();
        }
        out.push_str("}\n");
        out
    }

    /// `assign <var> = <factor,...>` per variable.
    pub fn assignment_table(&self) -> String {
        let mut out = String::new();
        for (v, fs) in &self.assign {
            let ids: Vec<String> = fs.iter().map(|f| f.to_string()).collect();
            writeln!(out, "assign {v} = {}", ids.join(",")).unwrap();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("internal error: contraction produced a cycle through `{0}`")]
    Cycle(String),
    #[error("no forward-sampling form exists: no DAG can be derived with the given constant-normalized densities")]
    NoDag,
}

/// Contract the selected edges into a DAG.
pub fn contract(g: &FactorGraph, s: &EdgeSelectionSet) -> Result<Dag, TransformError> {
    let mut dag = Dag {
        variables: g.variables.keys().cloned().collect(),
        edges: BTreeSet::new(),
        assign: g.variables.keys().map(|v| (v.clone(), BTreeSet::new())).collect(),
        selection: s.clone(),
    };
    for (vb, f) in &s.0 {
        dag.assign.entry(vb.clone()).or_default().insert(*f);
        for va in g.nei(*f) {
            if va != vb {
                dag.edges.insert((va.to_string(), vb.clone()));
            }
        }
    }
    if let Some(v) = find_cycle(&dag.variables, &dag.edges) {
        return Err(TransformError::Cycle(v));
    }
    Ok(dag)
}

/// A vertex on a directed cycle, by depth-first search with colors.
fn find_cycle(vars: &BTreeSet<String>, edges: &BTreeSet<(String, String)>) -> Option<String> {
    fn visit<'a>(
        v: &'a str,
        edges: &'a BTreeSet<(String, String)>,
        color: &mut BTreeMap<&'a str, u8>,
    ) -> Option<String> {
        color.insert(v, 1);
        for (a, b) in edges {
            if a != v {
                continue;
            }
            match color.get(b.as_str()).copied().unwrap_or(0) {
                1 => return Some(b.clone()),
                0 => {
                    if let Some(c) = visit(b, edges, color) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        color.insert(v, 2);
        None
    }
    let mut color = BTreeMap::new();
    for v in vars {
        if color.get(v.as_str()).copied().unwrap_or(0) == 0 {
            if let Some(c) = visit(v, edges, &mut color) {
                return Some(c);
            }
        }
    }
    None
}

/// σ: `s` assigns every factor exactly once along an existing edge, covers
/// every variable, and contracts to an acyclic graph.
pub fn soundness_oracle(g: &FactorGraph, s: &EdgeSelectionSet) -> bool {
    if !s.0.iter().all(|(v, f)| g.has_edge(v, *f)) {
        return false;
    }
    for f in g.factors.keys() {
        if s.0.iter().filter(|(_, h)| h == f).count() != 1 {
            return false;
        }
    }
    if !g.variables.keys().all(|v| !s.assigned(v).is_empty()) {
        return false;
    }
    let mut edges = BTreeSet::new();
    for (vb, f) in &s.0 {
        for va in g.nei(*f) {
            if va != vb {
                edges.insert((va.to_string(), vb.clone()));
            }
        }
    }
    find_cycle(&g.variables.keys().cloned().collect(), &edges).is_none()
}

/// Reference enumeration: every factor-to-neighbor assignment, filtered by
/// σ and by consistency with `r`. Exponential in the number of factors.
pub fn enumerate_sound(g: &FactorGraph, r: &RecognizableSet) -> Vec<EdgeSelectionSet> {
    let factors: Vec<(FactorId, Vec<String>)> = g
        .factors
        .keys()
        .map(|f| (*f, g.nei(*f).into_iter().map(String::from).collect()))
        .collect();
    let mut out = Vec::new();
    let mut choice = vec![0usize; factors.len()];
    loop {
        let s: EdgeSelectionSet = factors
            .iter()
            .zip(&choice)
            .map(|((f, nei), &k)| (nei[k].clone(), *f))
            .collect();
        let consistent = r
            .edges
            .values()
            .all(|rec| s.assigned(&rec.var) == BTreeSet::from([rec.factor]));
        if consistent && soundness_oracle(g, &s) {
            out.push(s);
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == factors.len() {
                out.sort();
                out.dedup();
                return out;
            }
            choice[k] += 1;
            if choice[k] < factors[k].1.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// A candidate conditional density for `var`: the factors assigned to it in
/// some selection set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Query {
    pub var: String,
    pub factors: BTreeSet<FactorId>,
    pub rendering: String,
}

pub fn render_factor_set(g: &FactorGraph, fs: &BTreeSet<FactorId>) -> String {
    let parts: Vec<&str> = fs.iter().map(|f| g.factors[f].pretty.as_str()).collect();
    format!("{{ {} }}", parts.join(", "))
}

fn contract_all(g: &FactorGraph, sets: &[EdgeSelectionSet]) -> Result<Vec<Dag>, TransformError> {
    sets.iter().map(|s| contract(g, s)).collect()
}

/// Variables not covered by `r` and not a root in every DAG of `sets`.
fn ambiguous_vars(g: &FactorGraph, r: &RecognizableSet, dags: &[Dag]) -> Vec<String> {
    g.variables
        .keys()
        .filter(|v| !r.covers(v) && !dags.iter().all(|d| d.is_root(v)))
        .cloned()
        .collect()
}

/// Queries for every distinct `(v, F(v, s))` over ambiguous variables,
/// ordered by variable then factor set.
pub fn build_queries(
    sets: &[EdgeSelectionSet],
    r: &RecognizableSet,
    g: &FactorGraph,
) -> Result<Vec<Query>, TransformError> {
    let dags = contract_all(g, sets)?;
    let mut out = BTreeSet::new();
    for v in ambiguous_vars(g, r, &dags) {
        for d in &dags {
            let fs = d.assign[&v].clone();
            out.insert(Query {
                rendering: render_factor_set(g, &fs),
                var: v.clone(),
                factors: fs,
            });
        }
    }
    Ok(out.into_iter().collect())
}

/// Affirmed `(variable, factor set)` pairs.
pub type Answers = BTreeSet<(String, BTreeSet<FactorId>)>;

/// S*: the sets in which every variable outside `r` is either a root or
/// has an affirmed factor set. A root's density depends on no other
/// variable, so its normalizing constant is trivially constant.
pub fn filter_by_answers(
    sets: &[EdgeSelectionSet],
    r: &RecognizableSet,
    g: &FactorGraph,
    answers: &Answers,
) -> Result<Vec<EdgeSelectionSet>, TransformError> {
    let mut out = Vec::new();
    for s in sets {
        let d = contract(g, s)?;
        let ok = g
            .variables
            .keys()
            .filter(|v| !r.covers(v))
            .all(|v| d.is_root(v) || answers.contains(&(v.clone(), d.assign[v].clone())));
        if ok {
            out.push(s.clone());
        }
    }
    Ok(out)
}

/// Lexicographically smallest member.
pub fn choose_canonical(sets: &[EdgeSelectionSet]) -> Result<EdgeSelectionSet, TransformError> {
    sets.iter().min().cloned().ok_or(TransformError::NoDag)
}

/// One numbered question about a variable's conditional density.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prompt {
    pub var: String,
    /// Option `k` (1-based) is `options[k - 1]`; option 0 is "none".
    pub options: Vec<BTreeSet<FactorId>>,
    pub renderings: Vec<String>,
}

impl Prompt {
    pub fn render(&self) -> String {
        let mut out = format!(
            "Variable {} has ambiguous conditional density. Which factor set is\nits constant-normalized density?\n  0: none of the below\n",
            self.var
        );
        for (k, r) in self.renderings.iter().enumerate() {
            writeln!(out, "  {}: {r}", k + 1).unwrap();
        }
        out.push_str("> ");
        out
    }
}

/// Sequential question-and-answer narrowing of S, one prompt per ambiguous
/// variable. Only non-root candidates are offered: a root needs no answer.
#[derive(Clone, Debug)]
pub struct QuerySession<'a> {
    g: &'a FactorGraph,
    r: &'a RecognizableSet,
    remaining: Vec<(EdgeSelectionSet, Dag)>,
    asked: BTreeSet<String>,
    pub answers: Answers,
}

impl<'a> QuerySession<'a> {
    pub fn new(g: &'a FactorGraph, r: &'a RecognizableSet, sets: &[EdgeSelectionSet]) -> Result<Self, TransformError> {
        let dags = contract_all(g, sets)?;
        Ok(QuerySession {
            g,
            r,
            remaining: sets.iter().cloned().zip(dags).collect(),
            asked: BTreeSet::new(),
            answers: Answers::new(),
        })
    }

    fn options(&self, v: &str) -> Vec<BTreeSet<FactorId>> {
        let mut opts: Vec<BTreeSet<FactorId>> = self
            .remaining
            .iter()
            .filter(|(_, d)| !d.is_root(v))
            .map(|(_, d)| d.assign[v].clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        opts.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        opts
    }

    /// The next question: the variable with the most candidate sets first.
    pub fn next_prompt(&self) -> Option<Prompt> {
        let dags: Vec<Dag> = self.remaining.iter().map(|(_, d)| d.clone()).collect();
        let var = ambiguous_vars(self.g, self.r, &dags)
            .into_iter()
            .filter(|v| !self.asked.contains(v))
            .map(|v| (Reverse(self.options(&v).len()), v))
            .min()?
            .1;
        let options = self.options(&var);
        let renderings = options.iter().map(|fs| render_factor_set(self.g, fs)).collect();
        Some(Prompt {
            var,
            options,
            renderings,
        })
    }

    /// Apply answer `choice` (0 = none) to `prompt`.
    pub fn answer(&mut self, prompt: &Prompt, choice: usize) -> Result<(), String> {
        if choice > prompt.options.len() {
            return Err(format!("option {choice} out of range 0..={}", prompt.options.len()));
        }
        let v = &prompt.var;
        let chosen = choice.checked_sub(1).map(|k| prompt.options[k].clone());
        if let Some(fs) = &chosen {
            self.answers.insert((v.clone(), fs.clone()));
        }
        self.remaining
            .retain(|(_, d)| d.is_root(v) || chosen.as_ref() == Some(&d.assign[v]));
        self.asked.insert(v.clone());
        Ok(())
    }

    /// Affirm every candidate, making the filter vacuous.
    pub fn affirm_all(&mut self) {
        while let Some(p) = self.next_prompt() {
            for fs in &p.options {
                self.answers.insert((p.var.clone(), fs.clone()));
            }
            self.asked.insert(p.var);
        }
    }

    /// S* after the answers given so far.
    pub fn finish(self) -> Vec<EdgeSelectionSet> {
        self.remaining.into_iter().map(|(s, _)| s).collect()
    }
}
