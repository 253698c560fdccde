//! Density bookkeeping across the pipeline, checked by direct
//! interpretation at random environments.

use std::collections::BTreeSet;

use fwdppl::codegen::Label;
use fwdppl::dataflow::backward_slice;
use fwdppl::factorgraph::{FactorGraph, FactorId};
use fwdppl::fixtures;
use fwdppl::frontend::{BlockKind, Stmt, StmtKind};
use fwdppl::pipeline::{Analysis, Mode, Policy};
use fwdppl::runtime::{joint_statements, plan_decls, program_decls, Env, Interp, Streams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::random_env;

const ENVS: usize = 100;

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn eval(a: &Analysis, stmts: &[Stmt], env: &Env) -> f64 {
    let mut i = Interp::new(program_decls(&a.program), env.clone(), Streams::new(0, 0));
    i.log_density(stmts).unwrap()
}

fn subgraph(g: &FactorGraph, keep: &BTreeSet<FactorId>) -> FactorGraph {
    let mut s = g.clone();
    s.factors.retain(|f, _| keep.contains(f));
    s.edges.retain(|(_, f)| keep.contains(f));
    s
}

/// Rewrite every `~` into its `target +=` form.
fn desugar(stmts: &[Stmt]) -> Vec<Stmt> {
    stmts
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if let Some(e) = s.desugared_tilde() {
                s.kind = StmtKind::TargetIncrement(e);
            }
            match &mut s.kind {
                StmtKind::For { body, .. } => *body = desugar(body),
                StmtKind::If {
                    then_branch,
                    else_branch,
                    ..
                } => {
                    *then_branch = desugar(then_branch);
                    if let Some(e) = else_branch {
                        *e = desugar(e);
                    }
                }
                _ => {}
            }
            s
        })
        .collect()
}

fn model_target(a: &Analysis) -> Vec<Stmt> {
    let p = &a.program;
    p.block_stmts(BlockKind::TransformedData)
        .iter()
        .chain(p.block_stmts(BlockKind::TransformedParameters))
        .chain(p.block_stmts(BlockKind::Model))
        .cloned()
        .collect()
}

#[test]
fn tilde_equals_its_desugaring() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tildes = 0;
    for (name, src) in fixtures::ALL {
        let a = Analysis::new(src).unwrap();
        let whole = model_target(&a);
        let whole_desugared = desugar(&whole);
        let top: Vec<&Stmt> = a
            .program
            .block_stmts(BlockKind::Model)
            .iter()
            .filter(|s| matches!(s.kind, StmtKind::Tilde { .. }))
            .collect();
        tildes += top.len();
        for _ in 0..ENVS {
            let env = random_env(name, &a, &mut rng);
            let (x, y) = (eval(&a, &whole, &env), eval(&a, &whole_desugared, &env));
            assert!(close(x, y, 1e-12), "{name}: {x} vs {y}");
            for s in &top {
                let mut stmts = backward_slice(&BTreeSet::from([s.id]), &a.deps, &a.program);
                let mut d = stmts.clone();
                stmts.push((*s).clone());
                d.extend(desugar(&[(*s).clone()]));
                let (x, y) = (eval(&a, &stmts, &env), eval(&a, &d, &env));
                assert!(close(x, y, 1e-12), "{name} line {}: {x} vs {y}", s.id);
            }
        }
    }
    assert!(tildes >= 5);
}

#[test]
fn factor_sum_equals_model_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (name, src) in fixtures::ALL {
        let a = Analysis::new(src).unwrap();
        let joint = joint_statements(&a.graph, &a.program, &a.deps);
        let direct = model_target(&a);
        for _ in 0..ENVS {
            let env = random_env(name, &a, &mut rng);
            let by_factors: f64 = a
                .graph
                .factors
                .keys()
                .map(|f| {
                    eval(
                        &a,
                        &joint_statements(&subgraph(&a.graph, &BTreeSet::from([*f])), &a.program, &a.deps),
                        &env,
                    )
                })
                .sum();
            let (x, y) = (eval(&a, &joint, &env), eval(&a, &direct, &env));
            assert!(close(x, y, 1e-12), "{name}: joint {x} vs model {y}");
            assert!(close(by_factors, y, 1e-12), "{name}: sum {by_factors} vs model {y}");
        }
    }
}

#[test]
fn pdf_segments_evaluate_their_assigned_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut segments = 0;
    for (name, src) in fixtures::ALL {
        let a = Analysis::new(src).unwrap();
        for mode in [Mode::Prior, Mode::Predictive, Mode::Full] {
            let Ok(t) = a.transform(mode, &mut Policy::AssumeAllYes) else {
                continue;
            };
            let plan = a.plan_for(&t).unwrap();
            let decls = plan_decls(&plan, &a.program);
            for seg in plan.segments.iter().filter(|s| s.label == Label::Pdf) {
                segments += 1;
                let assigned = t.dag.assign[seg.target()].clone();
                assert_eq!(seg.factors, assigned, "{name} {mode}: {}", seg.target());
                let oracle = joint_statements(&subgraph(&t.graph, &assigned), &a.program, &a.deps);
                for _ in 0..ENVS {
                    let env = random_env(name, &a, &mut rng);
                    let mut i = Interp::new(decls.clone(), env.clone(), Streams::new(0, 0));
                    let x = i.log_density(&seg.statements).unwrap();
                    let y = eval(&a, &oracle, &env);
                    assert!(close(x, y, 1e-12), "{name} {mode} {}: {x} vs {y}", seg.target());
                }
            }
        }
    }
    assert!(segments >= 6, "only {segments} PDF segments exercised");
}

#[test]
fn prior_restriction_partitions_factors() {
    for (name, src) in fixtures::ALL {
        let a = Analysis::new(src).unwrap();
        let data = a.program.data_vars();
        let modeled: BTreeSet<String> = a.graph.modeled_data().intersection(&data).cloned().collect();
        let removed: BTreeSet<FactorId> = a
            .graph
            .factors
            .keys()
            .filter(|f| a.graph.nei(**f).iter().any(|v| modeled.contains(*v)))
            .copied()
            .collect();
        let Ok(prior) = a.restricted(Mode::Prior) else { continue };
        let kept: BTreeSet<FactorId> = prior.factors.keys().copied().collect();
        assert!(kept.is_disjoint(&removed), "{name}");
        let all: BTreeSet<FactorId> = a.graph.factors.keys().copied().collect();
        assert_eq!(kept.union(&removed).copied().collect::<BTreeSet<_>>(), all, "{name}");
        assert!(prior.variables.keys().all(|v| !data.contains(v)), "{name}");
    }
}
