//! Propositional formulas, CNF conversion and projected all-solutions
//! enumeration with a small DPLL solver.

use std::collections::BTreeSet;
use std::fmt::Write;

/// Index of an atom in a [`Universe`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom(pub usize);

/// The declared atoms with their display names.
#[derive(Clone, Debug, Default)]
pub struct Universe {
    names: Vec<String>,
}

impl Universe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>) -> Atom {
        self.names.push(name.into());
        Atom(self.names.len() - 1)
    }

    pub fn name(&self, a: Atom) -> &str {
        &self.names[a.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = Atom> {
        (0..self.names.len()).map(Atom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(a: Atom) -> Self {
        Formula::Atom(a)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn eval(&self, val: &dyn Fn(Atom) -> bool) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => val(*a),
            Formula::Not(f) => !f.eval(val),
            Formula::And(fs) => fs.iter().all(|f| f.eval(val)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(val)),
            Formula::Implies(a, b) => !a.eval(val) || b.eval(val),
        }
    }

    pub fn atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                out.insert(*a);
            }
            Formula::Not(f) => f.atoms(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.atoms(out)),
            Formula::Implies(a, b) => {
                a.atoms(out);
                b.atoms(out);
            }
        }
    }
}

/// Negation normal form over literals.
#[derive(Clone, Debug)]
enum Nnf {
    Lit(i32),
    True,
    False,
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
}

fn nnf(f: &Formula, positive: bool) -> Nnf {
    match (f, positive) {
        (Formula::True, true) | (Formula::False, false) => Nnf::True,
        (Formula::True, false) | (Formula::False, true) => Nnf::False,
        (Formula::Atom(a), p) => {
            let v = a.0 as i32 + 1;
            Nnf::Lit(if p { v } else { -v })
        }
        (Formula::Not(g), p) => nnf(g, !p),
        (Formula::And(fs), true) | (Formula::Or(fs), false) => Nnf::And(fs.iter().map(|g| nnf(g, positive)).collect()),
        (Formula::Or(fs), true) | (Formula::And(fs), false) => Nnf::Or(fs.iter().map(|g| nnf(g, positive)).collect()),
        (Formula::Implies(a, b), true) => Nnf::Or(vec![nnf(a, false), nnf(b, true)]),
        (Formula::Implies(a, b), false) => Nnf::And(vec![nnf(a, true), nnf(b, false)]),
    }
}

/// Clause list over 1-based variables; negative literals are negated atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfInstance {
    pub num_vars: usize,
    pub clauses: Vec<Vec<i32>>,
    /// Display name of each variable, auxiliary ones included.
    pub names: Vec<String>,
    /// Variables whose values identify a solution.
    pub projection: Vec<usize>,
}

struct Clausifier {
    next_var: usize,
    clauses: Vec<Vec<i32>>,
}

impl Clausifier {
    /// Clauses equivalent (up to auxiliary variables) to `f`.
    fn clauses_of(&mut self, f: Nnf) -> Vec<Vec<i32>> {
        match f {
            Nnf::True => Vec::new(),
            Nnf::False => vec![Vec::new()],
            Nnf::Lit(l) => vec![vec![l]],
            Nnf::And(fs) => fs.into_iter().flat_map(|g| self.clauses_of(g)).collect(),
            Nnf::Or(fs) => {
                let mut clause = Vec::new();
                for g in fs {
                    match g {
                        Nnf::False => {}
                        Nnf::True => return Vec::new(),
                        Nnf::Lit(l) => clause.push(l),
                        Nnf::Or(inner) => {
                            let sub = self.clauses_of(Nnf::Or(inner));
                            match sub.len() {
                                0 => return Vec::new(),
                                1 => clause.extend(sub.into_iter().next().unwrap()),
                                _ => clause.push(self.define(sub)),
                            }
                        }
                        and => {
                            let sub = self.clauses_of(and);
                            if sub.is_empty() {
                                return Vec::new();
                            }
                            clause.push(self.define(sub));
                        }
                    }
                }
                clause.sort_unstable_by_key(|l| (l.abs(), *l));
                clause.dedup();
                if clause.windows(2).any(|w| w[0] == -w[1]) {
                    return Vec::new();
                }
                vec![clause]
            }
        }
    }

    /// Fresh variable `x` with `x -> clauses` (one-sided Tseitin).
    fn define(&mut self, clauses: Vec<Vec<i32>>) -> i32 {
        self.next_var += 1;
        let x = self.next_var as i32;
        for mut c in clauses {
            c.insert(0, -x);
            self.clauses.push(c);
        }
        x
    }
}

/// Equisatisfiable CNF. Formulas already in clausal shape map to their
/// clauses directly; other subformulas get auxiliary variables, which are
/// left out of the projection. The projection defaults to every universe atom.
pub fn to_cnf(f: &Formula, universe: &Universe) -> CnfInstance {
    let mut c = Clausifier {
        next_var: universe.len(),
        clauses: Vec::new(),
    };
    let top = c.clauses_of(nnf(f, true));
    let mut clauses = top;
    clauses.append(&mut c.clauses);
    let mut names: Vec<String> = universe.atoms().map(|a| universe.name(a).to_string()).collect();
    for k in universe.len()..c.next_var {
        names.push(format!("aux{}", k + 1));
    }
    CnfInstance {
        num_vars: c.next_var,
        clauses,
        names,
        projection: (1..=universe.len()).collect(),
    }
}

impl CnfInstance {
    pub fn with_projection(mut self, atoms: &[Atom]) -> Self {
        self.projection = atoms.iter().map(|a| a.0 + 1).collect();
        self.projection.sort_unstable();
        self.projection.dedup();
        self
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = String::new();
        let proj: Vec<String> = self.projection.iter().map(|v| v.to_string()).collect();
        writeln!(out, "c projection {}", proj.join(" ")).unwrap();
        for (k, n) in self.names.iter().enumerate() {
            writeln!(out, "c var {} {n}", k + 1).unwrap();
        }
        writeln!(out, "p cnf {} {}", self.num_vars, self.clauses.len()).unwrap();
        for c in &self.clauses {
            for l in c {
                write!(out, "{l} ").unwrap();
            }
            out.push_str("0\n");
        }
        out
    }
}

/// A complete satisfiability procedure over a clause list.
pub trait Solver {
    /// A satisfying assignment indexed by variable (index 0 unused).
    fn solve(&mut self, num_vars: usize, clauses: &[Vec<i32>]) -> Option<Vec<bool>>;
}

/// DPLL with unit propagation; decisions in ascending variable order, false first.
#[derive(Debug, Default)]
pub struct Dpll;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Val {
    Unset,
    True,
    False,
}

fn lit_val(assign: &[Val], l: i32) -> Val {
    match (assign[l.unsigned_abs() as usize], l > 0) {
        (Val::Unset, _) => Val::Unset,
        (Val::True, true) | (Val::False, false) => Val::True,
        _ => Val::False,
    }
}

fn set_lit(assign: &mut [Val], l: i32) {
    assign[l.unsigned_abs() as usize] = if l > 0 { Val::True } else { Val::False };
}

/// Propagate unit clauses; false on conflict.
fn propagate(assign: &mut [Val], clauses: &[Vec<i32>]) -> bool {
    loop {
        let mut changed = false;
        for c in clauses {
            let mut unset = None;
            let mut n_unset = 0;
            let mut sat = false;
            for &l in c {
                match lit_val(assign, l) {
                    Val::True => {
                        sat = true;
                        break;
                    }
                    Val::Unset => {
                        n_unset += 1;
                        unset = Some(l);
                    }
                    Val::False => {}
                }
            }
            if sat {
                continue;
            }
            match n_unset {
                0 => return false,
                1 => {
                    set_lit(assign, unset.unwrap());
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            return true;
        }
    }
}

fn dpll(assign: &mut Vec<Val>, clauses: &[Vec<i32>]) -> bool {
    if !propagate(assign, clauses) {
        return false;
    }
    let Some(v) = (1..assign.len()).find(|&v| assign[v] == Val::Unset) else {
        return true;
    };
    for choice in [Val::False, Val::True] {
        let saved = assign.clone();
        assign[v] = choice;
        if dpll(assign, clauses) {
            return true;
        }
        *assign = saved;
    }
    false
}

impl Solver for Dpll {
    fn solve(&mut self, num_vars: usize, clauses: &[Vec<i32>]) -> Option<Vec<bool>> {
        let mut assign = vec![Val::Unset; num_vars + 1];
        dpll(&mut assign, clauses).then(|| assign.iter().map(|v| *v == Val::True).collect())
    }
}

/// Distinct projected solutions and the number of solver calls made.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Enumeration {
    /// Each solution is the set of projection atoms assigned true.
    pub solutions: BTreeSet<BTreeSet<Atom>>,
    pub calls: usize,
}

/// Enumerate projections of all satisfying assignments by repeatedly solving
/// and blocking the projection of the last model.
pub fn enumerate_projected_with(solver: &mut dyn Solver, cnf: &CnfInstance) -> Enumeration {
    let mut clauses = cnf.clauses.clone();
    let mut solutions = BTreeSet::new();
    let mut calls = 0;
    loop {
        calls += 1;
        let Some(model) = solver.solve(cnf.num_vars, &clauses) else {
            break;
        };
        let mut sol = BTreeSet::new();
        let mut block = Vec::with_capacity(cnf.projection.len());
        for &v in &cnf.projection {
            if model[v] {
                sol.insert(Atom(v - 1));
                block.push(-(v as i32));
            } else {
                block.push(v as i32);
            }
        }
        solutions.insert(sol);
        clauses.push(block);
    }
    Enumeration { solutions, calls }
}

pub fn enumerate_projected(cnf: &CnfInstance) -> Enumeration {
    enumerate_projected_with(&mut Dpll, cnf)
}

/// Truth-table reference: projections of every satisfying valuation of the
/// universe. Exponential; for cross-checking small instances.
pub fn brute_force_projected(f: &Formula, universe: &Universe, projection: &[Atom]) -> BTreeSet<BTreeSet<Atom>> {
    let n = universe.len();
    assert!(n <= 24, "brute force limited to 24 atoms");
    let mut out = BTreeSet::new();
    for bits in 0u64..(1 << n) {
        if f.eval(&|a: Atom| bits >> a.0 & 1 == 1) {
            out.insert(projection.iter().copied().filter(|a| bits >> a.0 & 1 == 1).collect());
        }
    }
    out
}
