//! Lexing, parsing and validation of the mini probabilistic language.
//!
//! The language is a strict subset of Stan: six optional blocks in canonical
//! order, declarations with at most one dimension, assignments, `target +=`,
//! `~` sampling statements, `for`/`if` control flow and `reject`. Constructs
//! outside the subset are reported as unsupported instead of being guessed at.

pub mod ast;
pub mod builtins;
mod lexer;
mod parser;
pub mod pretty;

use std::collections::BTreeSet;
use std::fmt;

pub use ast::*;
pub use parser::{parse, parse_expr, parse_stmt};
pub use pretty::{expr_to_string, program_to_string, stmt_summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lexical,
    Syntax,
    Undeclared,
    /// A statement sits in a block that does not allow it.
    Misplaced,
    DuplicateBlock,
    Duplicate,
    Unsupported,
    Arity,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: Span,
    pub message: String,
}

impl ParseError {
    pub fn new(kind: ParseErrorKind, span: Span, message: impl Into<String>) -> Self {
        ParseError {
            kind,
            span,
            message: message.into(),
        }
    }

    fn lexical(span: Span, message: impl Into<String>) -> Self {
        Self::new(ParseErrorKind::Lexical, span, message)
    }
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Non-builtin identifiers occurring syntactically in `stmt`, nested
/// statements included. The `target` accumulator never appears, and loop
/// indices bound by `stmt` itself are excluded.
pub fn free_vars(stmt: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    match &stmt.kind {
        StmtKind::Decl(d) => {
            out.insert(d.name.clone());
            for e in [d.length(), d.bounds.lower.as_ref(), d.bounds.upper.as_ref()]
                .into_iter()
                .flatten()
            {
                e.collect_vars(&mut out);
            }
        }
        StmtKind::Assign { target, value } => {
            out.insert(target.name.clone());
            if let Some(i) = &target.index {
                i.collect_vars(&mut out);
            }
            value.collect_vars(&mut out);
        }
        StmtKind::TargetIncrement(e) => e.collect_vars(&mut out),
        StmtKind::Tilde { variate, args, .. } => {
            variate.collect_vars(&mut out);
            args.iter().for_each(|a| a.collect_vars(&mut out));
        }
        StmtKind::For { var, lo, hi, body } => {
            lo.collect_vars(&mut out);
            hi.collect_vars(&mut out);
            for s in body {
                out.extend(free_vars(s));
            }
            out.remove(var);
        }
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            cond.collect_vars(&mut out);
            for s in then_branch.iter().chain(else_branch.iter().flatten()) {
                out.extend(free_vars(s));
            }
        }
        StmtKind::Reject(_) => {}
    }
    out
}

/// Variables whose *values* a statement reads or writes at its own level.
///
/// Unlike [`free_vars`], compound statements contribute only their header
/// (loop bounds, branch condition), and a declaration contributes only the
/// declared name: sizes and bounds are shape metadata fixed by data.
pub fn own_vars(stmt: &Stmt) -> BTreeSet<String> {
    match &stmt.kind {
        StmtKind::Decl(d) => BTreeSet::from([d.name.clone()]),
        StmtKind::For { lo, hi, .. } => {
            let mut out = lo.vars();
            hi.collect_vars(&mut out);
            out
        }
        StmtKind::If { cond, .. } => cond.vars(),
        _ => free_vars(stmt),
    }
}

#[cfg(test)]
mod tests;
