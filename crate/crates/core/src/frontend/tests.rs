use std::collections::BTreeSet;

use proptest::prelude::*;

use super::lexer::{lex, Tok};
use super::*;
use crate::fixtures;

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn model_stmt(p: &Program, k: usize) -> &Stmt {
    &p.block_stmts(BlockKind::Model)[k]
}

#[test]
fn eight_schools_shape() {
    let p = parse(fixtures::EIGHT_SCHOOLS).unwrap();
    assert_eq!(p.blocks.len(), 4);
    assert_eq!(p.block_stmts(BlockKind::Model).len(), 4);
    assert_eq!(p.declared_in(BlockKind::Data), vec!["J", "y", "sigma"]);
    assert_eq!(p.declared_in(BlockKind::Parameters), vec!["mu", "tau", "theta"]);
    // The unnormalized prior sits on line 12, the tau prior on line 13.
    assert_eq!(p.span(model_stmt(&p, 0).id).line, 12);
    assert_eq!(p.span(model_stmt(&p, 1).id).line, 13);
    assert_eq!(stmt_summary(model_stmt(&p, 0)), "target += -(mu - 1)^2");
}

#[test]
fn ids_follow_source_order() {
    for (name, src) in fixtures::ALL {
        let p = parse(src).unwrap();
        let ids: Vec<StmtId> = p.statements().iter().map(|s| s.id).collect();
        assert_eq!(ids, (0..p.num_statements()).collect::<Vec<_>>(), "{name}");
        let spans: Vec<Span> = ids.iter().map(|&i| p.span(i)).collect();
        assert!(spans.windows(2).all(|w| w[0] <= w[1]), "{name}");
    }
}

#[test]
fn empty_model_block() {
    let p = parse(fixtures::EMPTY_MODEL).unwrap();
    assert!(p.block_stmts(BlockKind::Model).is_empty());
}

#[test]
fn undeclared_identifier() {
    let e = parse("model { x ~ normal(0, 1); }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Undeclared);
    assert_eq!(e.span, Span { line: 1, col: 9 });
    assert!(e.to_string().contains("`x`"));
}

#[test]
fn declared_after_use() {
    let e = parse("parameters { real a; } model { target += b; real b; }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Undeclared);
}

#[test]
fn density_outside_model() {
    let e = parse("parameters { real a; } generated quantities { target += a; }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Misplaced);
    let e = parse("data { real a; } transformed data { a ~ normal(0, 1); }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Misplaced);
}

#[test]
fn duplicate_block() {
    let e = parse("model { } model { }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::DuplicateBlock);
}

#[test]
fn blocks_out_of_order() {
    assert!(parse("model { } data { }").is_err());
}

#[test]
fn duplicate_declaration() {
    let e = parse("data { real a; } parameters { real a; }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Duplicate);
}

#[test]
fn unsupported_constructs() {
    for src in [
        "functions { }",
        "parameters { real a; } model { while (a) { } }",
        "parameters { real a; } model { target += foo(a); }",
        "parameters { real a; } model { a ~ cauchy(0, 1); }",
        "parameters { real a[2][3]; }",
    ] {
        let e = parse(src).unwrap_err();
        assert!(
            matches!(e.kind, ParseErrorKind::Unsupported | ParseErrorKind::Syntax),
            "{src}: {e}"
        );
    }
}

#[test]
fn arity_checked() {
    let e = parse("parameters { real a; } model { a ~ normal(0); }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Arity);
    let e = parse("parameters { real a; } model { target += normal_lpdf(a | 0); }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Arity);
}

#[test]
fn rng_only_in_generating_blocks() {
    let e = parse("parameters { real a; } model { real b; b = normal_rng(0, 1); }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Misplaced);
    parse("transformed data { real b; b = normal_rng(0, 1); }").unwrap();
}

#[test]
fn cannot_assign_other_blocks() {
    let e = parse("parameters { real a; } model { a = 1; }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Misplaced);
}

#[test]
fn syntax_error_location() {
    let e = parse("model {\n  target += ;\n}").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Syntax);
    assert_eq!(e.span, Span { line: 2, col: 13 });
}

#[test]
fn multiple_declarators() {
    let p = parse(fixtures::TWO_ORDERS).unwrap();
    assert_eq!(p.declared_in(BlockKind::Parameters), vec!["x", "y"]);
}

#[test]
fn bounds_and_sizes() {
    let p = parse("data { int N; } parameters { real<lower=0, upper=N + 1> a; vector<lower=-1>[N] v; }").unwrap();
    let a = &p.symbols["a"].decl;
    assert_eq!(a.bounds.lower, Some(Expr::Int(0)));
    assert!(a.bounds.upper.is_some());
    let v = &p.symbols["v"].decl;
    assert!(v.is_sequence());
    assert_eq!(pretty::decl_to_string(v), "vector<lower=-1>[N] v");
}

#[test]
fn operator_precedence() {
    assert_eq!(expr_to_string(&parse_expr("-(mu - 1)^2").unwrap()), "-(mu - 1)^2");
    assert_eq!(
        parse_expr("-x^2").unwrap(),
        Expr::Unary(
            UnOp::Neg,
            Box::new(Expr::binary(BinOp::Pow, Expr::var("x"), Expr::Int(2)))
        )
    );
    assert_eq!(
        parse_expr("a - b - c").unwrap(),
        Expr::binary(
            BinOp::Sub,
            Expr::binary(BinOp::Sub, Expr::var("a"), Expr::var("b")),
            Expr::var("c")
        )
    );
    assert_eq!(expr_to_string(&parse_expr("a - (b - c)").unwrap()), "a - (b - c)");
    assert_eq!(expr_to_string(&parse_expr("2^3^2").unwrap()), "2^3^2");
    assert_eq!(expr_to_string(&parse_expr("(2^3)^2").unwrap()), "(2^3)^2");
    assert_eq!(
        expr_to_string(&parse_expr("x < 0 || x > 2 * pi()").unwrap()),
        "x < 0 || x > 2 * pi()"
    );
    assert_eq!(
        expr_to_string(&parse_expr("normal_lpdf(x | mu, sigma)").unwrap()),
        "normal_lpdf(x | mu, sigma)"
    );
}

#[test]
fn bar_only_after_variate() {
    assert!(parse_expr("normal_lpdf(x, mu | sigma)").is_err());
    assert!(parse_expr("pow(x | 2)").is_err());
}

#[test]
fn free_vars_examples() {
    let p = parse(
        "data { int J; real x; } parameters { real mu; real sigma; } \
         transformed parameters { real t[J]; real a; real y; a = 2; y = 3; \
         for (i in 1:J) { t[i] = a * i; } } \
         model { target += normal_lpdf(x | mu, sigma); }",
    )
    .unwrap();
    let stmts = p.statements();
    let find = |text: &str| *stmts.iter().find(|s| stmt_summary(s).starts_with(text)).unwrap();
    assert_eq!(free_vars(find("target += normal_lpdf")), set(&["x", "mu", "sigma"]));
    assert_eq!(free_vars(find("y = 3")), set(&["y"]));
    assert_eq!(free_vars(find("for (i in 1:J)")), set(&["t", "a", "J"]));
    assert_eq!(free_vars(find("t[i] = a * i")), set(&["t", "a", "i"]));
}

/// Token-level oracle: identifiers that are not keywords, not called as
/// functions, and not bound by a `for` header inside the text.
fn oracle_free_vars(text: &str) -> BTreeSet<String> {
    let toks: Vec<Tok> = lex(text).unwrap().into_iter().map(|t| t.tok).collect();
    let keywords = [
        "for", "in", "if", "else", "target", "reject", "real", "int", "vector", "lower", "upper",
    ];
    let mut bound = BTreeSet::new();
    for w in toks.windows(3) {
        if let (Tok::Ident(f), Tok::LParen, Tok::Ident(v)) = (&w[0], &w[1], &w[2]) {
            if f == "for" {
                bound.insert(v.clone());
            }
        }
    }
    let mut out = BTreeSet::new();
    for (k, t) in toks.iter().enumerate() {
        if let Tok::Ident(name) = t {
            let is_call = matches!(toks.get(k + 1), Some(Tok::LParen));
            let after_tilde = k > 0 && toks[k - 1] == Tok::Tilde;
            if !keywords.contains(&name.as_str()) && !is_call && !after_tilde && !bound.contains(name) {
                out.insert(name.clone());
            }
        }
    }
    out
}

#[test]
fn free_vars_match_token_oracle() {
    for (name, src) in fixtures::ALL {
        let p = parse(src).unwrap();
        for s in p.statements() {
            let text = pretty::stmts_to_string(std::slice::from_ref(s), 0);
            assert_eq!(free_vars(s), oracle_free_vars(&text), "{name}: {text}");
        }
    }
}

#[test]
fn free_vars_monotone_under_nesting() {
    for (_, src) in fixtures::ALL {
        let p = parse(src).unwrap();
        for s in p.statements() {
            let mut children = BTreeSet::new();
            for c in s.children() {
                children.extend(free_vars(c));
            }
            if let StmtKind::For { var, .. } = &s.kind {
                children.remove(var);
            }
            assert!(free_vars(s).is_superset(&children));
        }
    }
}

#[test]
fn fixtures_round_trip() {
    for (name, src) in fixtures::ALL {
        let p = parse(src).unwrap();
        let printed = program_to_string(&p);
        let q = parse(&printed).unwrap_or_else(|e| panic!("{name}: {e}\n{printed}"));
        assert_eq!(p.blocks, q.blocks, "{name}");
        assert_eq!(printed, program_to_string(&q), "{name}");
    }
}

#[test]
fn tilde_desugars_to_density_call() {
    let p = parse("data { int k; } parameters { real a; } model { a ~ normal(0, 1); k ~ poisson(a); }").unwrap();
    let d = model_stmt(&p, 0).desugared_tilde().unwrap();
    assert_eq!(expr_to_string(&d), "normal_lpdf(a | 0, 1)");
    let d = model_stmt(&p, 1).desugared_tilde().unwrap();
    assert_eq!(expr_to_string(&d), "poisson_lpmf(k | a)");
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0i64..100).prop_map(Expr::Int),
        (0.0f64..100.0).prop_map(Expr::Real),
        prop::sample::select(vec!["a", "b", "c"]).prop_map(Expr::var),
    ];
    leaf.prop_recursive(4, 32, 3, |inner| {
        let ops = prop::sample::select(vec![
            BinOp::Add,
            BinOp::Sub,
            BinOp::Mul,
            BinOp::Div,
            BinOp::Pow,
            BinOp::Lt,
            BinOp::Eq,
            BinOp::And,
            BinOp::Or,
        ]);
        prop_oneof![
            (ops, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            inner.clone().prop_map(|e| Expr::Unary(UnOp::Neg, Box::new(e))),
            inner.clone().prop_map(|e| Expr::Unary(UnOp::Not, Box::new(e))),
            (inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(a, b, c)| Expr::call("normal_lpdf", vec![a, b, c])),
            inner.clone().prop_map(|e| Expr::Index("a".into(), Box::new(e))),
        ]
    })
}

proptest! {
    #[test]
    fn expression_print_parse_round_trip(e in arb_expr()) {
        let text = expr_to_string(&e);
        let back = parse_expr(&text).unwrap();
        prop_assert_eq!(back, e);
    }
}
