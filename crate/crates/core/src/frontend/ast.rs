//! Abstract syntax of the mini probabilistic language.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Stable statement identifier; ids increase with source position.
pub type StmtId = usize;

/// Name of the reserved density accumulator.
pub const TARGET: &str = "target";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    Data,
    TransformedData,
    Parameters,
    TransformedParameters,
    Model,
    GeneratedQuantities,
}

impl BlockKind {
    pub const ALL: [BlockKind; 6] = [
        BlockKind::Data,
        BlockKind::TransformedData,
        BlockKind::Parameters,
        BlockKind::TransformedParameters,
        BlockKind::Model,
        BlockKind::GeneratedQuantities,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            BlockKind::Data => "data",
            BlockKind::TransformedData => "transformed data",
            BlockKind::Parameters => "parameters",
            BlockKind::TransformedParameters => "transformed parameters",
            BlockKind::Model => "model",
            BlockKind::GeneratedQuantities => "generated quantities",
        }
    }

    /// Blocks whose statements may call `_rng` functions.
    pub fn allows_rng(self) -> bool {
        matches!(self, BlockKind::TransformedData | BlockKind::GeneratedQuantities)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElemType {
    Real,
    Int,
}

/// How the declared type was spelled. Only one dimension is supported.
#[derive(Clone, Debug, PartialEq)]
pub enum TypeSpelling {
    /// `real x;` or `real x[N];`
    Real,
    /// `int n;` or `int n[N];`
    Int,
    /// `vector[N] v;`
    Vector(Expr),
    /// `real[N] x;`
    RealArray(Expr),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub lower: Option<Expr>,
    pub upper: Option<Expr>,
}

impl Bounds {
    pub fn is_empty(&self) -> bool {
        self.lower.is_none() && self.upper.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decl {
    pub spelling: TypeSpelling,
    pub bounds: Bounds,
    pub name: String,
    /// Trailing array dimension, `real y[J]`.
    pub dims: Option<Expr>,
}

impl Decl {
    pub fn elem_type(&self) -> ElemType {
        match self.spelling {
            TypeSpelling::Int => ElemType::Int,
            _ => ElemType::Real,
        }
    }

    /// Length expression when the variable is a sequence.
    pub fn length(&self) -> Option<&Expr> {
        match &self.spelling {
            TypeSpelling::Vector(n) | TypeSpelling::RealArray(n) => Some(n),
            _ => self.dims.as_ref(),
        }
    }

    pub fn is_sequence(&self) -> bool {
        self.length().is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
            BinOp::Pow => 8,
        }
    }

    pub fn right_assoc(self) -> bool {
        matches!(self, BinOp::Pow)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

/// Precedence of prefix operators, between `*` and `^`.
pub const UNARY_PRECEDENCE: u8 = 7;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64),
    Real(f64),
    Var(String),
    Index(String, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn call(name: &str, args: Vec<Expr>) -> Expr {
        Expr::Call(name.to_string(), args)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Identifiers referenced anywhere in the expression (function names excluded).
    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Int(_) | Expr::Real(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Index(v, i) => {
                out.insert(v.clone());
                i.collect_vars(out);
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn mentions(&self, name: &str) -> bool {
        match self {
            Expr::Int(_) | Expr::Real(_) => false,
            Expr::Var(v) => v == name,
            Expr::Index(v, i) => v == name || i.mentions(name),
            Expr::Unary(_, e) => e.mentions(name),
            Expr::Binary(_, a, b) => a.mentions(name) || b.mentions(name),
            Expr::Call(_, args) => args.iter().any(|a| a.mentions(name)),
        }
    }

    /// Whether any builtin call in the expression satisfies `pred`.
    pub fn any_call(&self, pred: &dyn Fn(&str) -> bool) -> bool {
        match self {
            Expr::Int(_) | Expr::Real(_) | Expr::Var(_) => false,
            Expr::Index(_, i) => i.any_call(pred),
            Expr::Unary(_, e) => e.any_call(pred),
            Expr::Binary(_, a, b) => a.any_call(pred) || b.any_call(pred),
            Expr::Call(name, args) => pred(name) || args.iter().any(|a| a.any_call(pred)),
        }
    }

    pub fn rename(&mut self, map: &BTreeMap<String, String>) {
        match self {
            Expr::Int(_) | Expr::Real(_) => {}
            Expr::Var(v) => {
                if let Some(n) = map.get(v) {
                    *v = n.clone();
                }
            }
            Expr::Index(v, i) => {
                if let Some(n) = map.get(v) {
                    *v = n.clone();
                }
                i.rename(map);
            }
            Expr::Unary(_, e) => e.rename(map),
            Expr::Binary(_, a, b) => {
                a.rename(map);
                b.rename(map);
            }
            Expr::Call(_, args) => args.iter_mut().for_each(|a| a.rename(map)),
        }
    }
}

/// Left-hand side of an assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct LValue {
    pub name: String,
    pub index: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    Decl(Decl),
    Assign {
        target: LValue,
        value: Expr,
    },
    TargetIncrement(Expr),
    /// `variate ~ dist(args)`; kept distinct from its `target +=` desugaring.
    Tilde {
        variate: Expr,
        dist: String,
        args: Vec<Expr>,
    },
    For {
        var: String,
        lo: Expr,
        hi: Expr,
        body: Vec<Stmt>,
    },
    If {
        cond: Expr,
        then_branch: Vec<Stmt>,
        else_branch: Option<Vec<Stmt>>,
    },
    Reject(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stmt {
    pub id: StmtId,
    pub kind: StmtKind,
}

impl Stmt {
    /// `target +=`, `~` and `reject` statements contribute to the density.
    pub fn is_density(&self) -> bool {
        matches!(
            self.kind,
            StmtKind::TargetIncrement(_) | StmtKind::Tilde { .. } | StmtKind::Reject(_)
        )
    }

    pub fn is_control(&self) -> bool {
        matches!(self.kind, StmtKind::For { .. } | StmtKind::If { .. })
    }

    /// Directly nested statements, in source order.
    pub fn children(&self) -> Vec<&Stmt> {
        match &self.kind {
            StmtKind::For { body, .. } => body.iter().collect(),
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => then_branch.iter().chain(else_branch.iter().flatten()).collect(),
            _ => Vec::new(),
        }
    }

    /// The `target +=` expression equivalent to a `~` statement.
    pub fn desugared_tilde(&self) -> Option<Expr> {
        match &self.kind {
            StmtKind::Tilde { variate, dist, args } => {
                let suffix = match crate::frontend::builtins::distribution(dist) {
                    Some(d) if d.discrete => "_lpmf",
                    _ => "_lpdf",
                };
                let mut all = vec![variate.clone()];
                all.extend(args.iter().cloned());
                Some(Expr::Call(format!("{dist}{suffix}"), all))
            }
            _ => None,
        }
    }

    /// Visit this statement and all nested statements in preorder.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn rename(&mut self, map: &BTreeMap<String, String>) {
        let sub = |n: &mut String| {
            if let Some(x) = map.get(n) {
                *n = x.clone();
            }
        };
        match &mut self.kind {
            StmtKind::Decl(d) => {
                sub(&mut d.name);
                if let TypeSpelling::Vector(e) | TypeSpelling::RealArray(e) = &mut d.spelling {
                    e.rename(map);
                }
                if let Some(e) = &mut d.dims {
                    e.rename(map);
                }
                if let Some(e) = &mut d.bounds.lower {
                    e.rename(map);
                }
                if let Some(e) = &mut d.bounds.upper {
                    e.rename(map);
                }
            }
            StmtKind::Assign { target, value } => {
                sub(&mut target.name);
                if let Some(i) = &mut target.index {
                    i.rename(map);
                }
                value.rename(map);
            }
            StmtKind::TargetIncrement(e) => e.rename(map),
            StmtKind::Tilde { variate, args, .. } => {
                variate.rename(map);
                args.iter_mut().for_each(|a| a.rename(map));
            }
            StmtKind::For { lo, hi, body, .. } => {
                lo.rename(map);
                hi.rename(map);
                body.iter_mut().for_each(|s| s.rename(map));
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                cond.rename(map);
                then_branch.iter_mut().for_each(|s| s.rename(map));
                if let Some(b) = else_branch {
                    b.iter_mut().for_each(|s| s.rename(map));
                }
            }
            StmtKind::Reject(_) => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub kind: BlockKind,
    pub stmts: Vec<Stmt>,
}

/// Line/column of a statement's first token (1-based).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Symbol {
    pub decl: Decl,
    pub block: BlockKind,
    pub decl_id: StmtId,
    pub span: Span,
}

/// Per-statement facts gathered at parse time, indexed by statement id.
#[derive(Clone, Debug, PartialEq)]
pub struct StmtInfo {
    pub block: BlockKind,
    pub span: Span,
    /// Enclosing `for`/`if` statements, outermost first.
    pub enclosing: Vec<StmtId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub blocks: Vec<Block>,
    pub symbols: BTreeMap<String, Symbol>,
    pub info: Vec<StmtInfo>,
}

impl Program {
    pub fn block(&self, kind: BlockKind) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    pub fn block_stmts(&self, kind: BlockKind) -> &[Stmt] {
        self.block(kind).map(|b| b.stmts.as_slice()).unwrap_or(&[])
    }

    /// All statements, nested ones included, in id order.
    pub fn statements(&self) -> Vec<&Stmt> {
        let mut out = Vec::with_capacity(self.info.len());
        for b in &self.blocks {
            for s in &b.stmts {
                s.walk(&mut |x| out.push(x));
            }
        }
        out
    }

    pub fn stmt(&self, id: StmtId) -> Option<&Stmt> {
        let mut found = None;
        for b in &self.blocks {
            for s in &b.stmts {
                s.walk(&mut |x| {
                    if x.id == id {
                        found = Some(x);
                    }
                });
            }
        }
        found
    }

    pub fn num_statements(&self) -> usize {
        self.info.len()
    }

    pub fn span(&self, id: StmtId) -> Span {
        self.info.get(id).map(|i| i.span).unwrap_or_default()
    }

    /// Variables declared in `kind`, in declaration order.
    pub fn declared_in(&self, kind: BlockKind) -> Vec<String> {
        let mut syms: Vec<&Symbol> = self.symbols.values().filter(|s| s.block == kind).collect();
        syms.sort_by_key(|s| s.decl_id);
        syms.into_iter().map(|s| s.decl.name.clone()).collect()
    }

    pub fn data_vars(&self) -> BTreeSet<String> {
        self.declared_in(BlockKind::Data).into_iter().collect()
    }

    pub fn param_vars(&self) -> BTreeSet<String> {
        self.declared_in(BlockKind::Parameters).into_iter().collect()
    }

    /// Declaration position used for deterministic tie-breaking.
    pub fn decl_order(&self, name: &str) -> usize {
        self.symbols.get(name).map(|s| s.decl_id).unwrap_or(usize::MAX)
    }

    pub fn is_input(&self, name: &str) -> bool {
        matches!(
            self.symbols.get(name).map(|s| s.block),
            Some(BlockKind::Data | BlockKind::Parameters)
        )
    }
}
