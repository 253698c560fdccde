//! Canonical source rendering. Output always reparses to the same tree.

use std::fmt::Write;

use super::ast::*;
use super::builtins;

const ATOM: u8 = 10;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Unary(..) => UNARY_PRECEDENCE,
        _ => ATOM,
    }
}

fn child(out: &mut String, e: &Expr, min: u8) {
    if prec(e) < min {
        out.push('(');
        expr_into(out, e);
        out.push(')');
    } else {
        expr_into(out, e);
    }
}

fn real_literal(r: f64) -> String {
    let s = format!("{r:?}");
    if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn expr_into(out: &mut String, e: &Expr) {
    match e {
        Expr::Int(i) => write!(out, "{i}").unwrap(),
        Expr::Real(r) => out.push_str(&real_literal(*r)),
        Expr::Var(v) => out.push_str(v),
        Expr::Index(v, i) => {
            out.push_str(v);
            out.push('[');
            expr_into(out, i);
            out.push(']');
        }
        Expr::Unary(op, a) => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            child(out, a, UNARY_PRECEDENCE);
        }
        Expr::Binary(BinOp::Pow, a, b) => {
            child(out, a, ATOM);
            out.push('^');
            child(out, b, UNARY_PRECEDENCE);
        }
        Expr::Binary(op, a, b) => {
            let p = op.precedence();
            child(out, a, p);
            write!(out, " {} ", op.symbol()).unwrap();
            child(out, b, p + 1);
        }
        Expr::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            let bar = builtins::uses_bar(name);
            for (k, a) in args.iter().enumerate() {
                if k == 1 {
                    out.push_str(if bar { " | " } else { ", " });
                } else if k > 1 {
                    out.push_str(", ");
                }
                expr_into(out, a);
            }
            out.push(')');
        }
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    expr_into(&mut s, e);
    s
}

fn bounds_to_string(b: &Bounds) -> String {
    if b.is_empty() {
        return String::new();
    }
    let mut parts = Vec::new();
    if let Some(l) = &b.lower {
        parts.push(format!("lower={}", expr_to_string(l)));
    }
    if let Some(u) = &b.upper {
        parts.push(format!("upper={}", expr_to_string(u)));
    }
    format!("<{}>", parts.join(", "))
}

pub fn decl_to_string(d: &Decl) -> String {
    let b = bounds_to_string(&d.bounds);
    let ty = match &d.spelling {
        TypeSpelling::Real => format!("real{b}"),
        TypeSpelling::Int => format!("int{b}"),
        TypeSpelling::Vector(n) => format!("vector{b}[{}]", expr_to_string(n)),
        TypeSpelling::RealArray(n) => format!("real{b}[{}]", expr_to_string(n)),
    };
    match &d.dims {
        Some(n) => format!("{ty} {}[{}]", d.name, expr_to_string(n)),
        None => format!("{ty} {}", d.name),
    }
}

/// Single-line rendering without the trailing `;` of simple statements.
pub fn stmt_summary(s: &Stmt) -> String {
    match &s.kind {
        StmtKind::Decl(d) => decl_to_string(d),
        StmtKind::Assign { target, value } => match &target.index {
            Some(i) => format!("{}[{}] = {}", target.name, expr_to_string(i), expr_to_string(value)),
            None => format!("{} = {}", target.name, expr_to_string(value)),
        },
        StmtKind::TargetIncrement(e) => format!("target += {}", expr_to_string(e)),
        StmtKind::Tilde { variate, dist, args } => format!(
            "{} ~ {dist}({})",
            expr_to_string(variate),
            args.iter().map(expr_to_string).collect::<Vec<_>>().join(", ")
        ),
        StmtKind::Reject(msg) => format!("reject(\"{msg}\")"),
        StmtKind::For { .. } | StmtKind::If { .. } => {
            let mut out = String::new();
            stmt_into(&mut out, s, 0);
            out.split_whitespace().collect::<Vec<_>>().join(" ")
        }
    }
}

fn block_into(out: &mut String, stmts: &[Stmt], indent: usize) {
    for s in stmts {
        stmt_into(out, s, indent);
    }
}

fn stmt_into(out: &mut String, s: &Stmt, indent: usize) {
    let pad = "  ".repeat(indent);
    match &s.kind {
        StmtKind::For { var, lo, hi, body } => {
            writeln!(
                out,
                "{pad}for ({var} in {}:{}) {{",
                expr_to_string(lo),
                expr_to_string(hi)
            )
            .unwrap();
            block_into(out, body, indent + 1);
            writeln!(out, "{pad}}}").unwrap();
        }
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            writeln!(out, "{pad}if ({}) {{", expr_to_string(cond)).unwrap();
            block_into(out, then_branch, indent + 1);
            match else_branch {
                Some(b) => {
                    writeln!(out, "{pad}}} else {{").unwrap();
                    block_into(out, b, indent + 1);
                    writeln!(out, "{pad}}}").unwrap();
                }
                None => writeln!(out, "{pad}}}").unwrap(),
            }
        }
        _ => writeln!(out, "{pad}{};", stmt_summary(s)).unwrap(),
    }
}

pub fn stmts_to_string(stmts: &[Stmt], indent: usize) -> String {
    let mut out = String::new();
    block_into(&mut out, stmts, indent);
    out
}

pub fn blocks_to_string(blocks: &[Block]) -> String {
    let mut out = String::new();
    for b in blocks {
        writeln!(out, "{} {{", b.kind.keyword()).unwrap();
        block_into(&mut out, &b.stmts, 1);
        out.push_str("}\n");
    }
    out
}

pub fn program_to_string(p: &Program) -> String {
    blocks_to_string(&p.blocks)
}
