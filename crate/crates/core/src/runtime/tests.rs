use super::*;
use crate::codegen::Label;
use crate::fixtures;
use crate::frontend::{parse, parse_stmt, BlockKind};
use crate::pipeline::{Analysis, Mode, Policy};

fn data_for(name: &str, prog: &crate::Program) -> Env {
    match fixtures::data(name) {
        Some(csv) => read_env(csv.as_bytes(), &program_decls(prog)).unwrap(),
        None => Env::new(),
    }
}

fn fast() -> MhConfig {
    MhConfig {
        warmup: 60,
        inner_iters: 20,
        ..MhConfig::default()
    }
}

/// An interpreter over `decls_src` (declarations wrapped in a
/// `generated quantities` block) with an empty environment.
fn interp(decls_src: &str, seed: u64) -> Interp {
    let p = parse(&format!("generated quantities {{ {decls_src} }}")).unwrap();
    Interp::new(program_decls(&p), Env::new(), Streams::new(seed, 0))
}

fn run(i: &mut Interp, stmt: &str) -> Result<(), ExecError> {
    i.exec_stmt(&parse_stmt(stmt).unwrap())
}

#[test]
fn substreams_are_keyed_by_seed_row_and_name() {
    use rand::Rng;
    let a: u64 = substream(1, 0, "mu").random();
    assert_eq!(a, substream(1, 0, "mu").random::<u64>());
    assert_ne!(a, substream(2, 0, "mu").random::<u64>());
    assert_ne!(a, substream(1, 1, "mu").random::<u64>());
    assert_ne!(a, substream(1, 0, "tau").random::<u64>());
}

#[test]
fn rng_draws_are_reproducible() {
    let mut a = interp("real tau;", 42);
    let mut b = interp("real tau;", 42);
    run(&mut a, "tau = normal_rng(1, 1);").unwrap();
    run(&mut b, "tau = normal_rng(1, 1);").unwrap();
    assert_eq!(a.env["tau"], b.env["tau"]);
}

#[test]
fn rng_domain_error() {
    let mut i = interp("real y; real s;", 1);
    i.env.insert("s".into(), Value::Real(0.0));
    let e = run(&mut i, "y = normal_rng(0, s);").unwrap_err();
    assert!(e.to_string().contains("invalid parameters for normal"), "{e}");
}

#[test]
fn rng_into_sequence_draws_per_element() {
    let mut i = interp("vector[3] theta; int k[3];", 7);
    run(&mut i, "theta = normal_rng(0, 1);").unwrap();
    assert_eq!(i.env["theta"].len(), Some(3));
    run(&mut i, "k = poisson_rng(3);").unwrap();
    assert!(matches!(i.env["k"], Value::IntArray(_)));
}

#[test]
fn bounded_draws_are_truncated() {
    let mut i = interp("real<lower=0> tau[2000];", 3);
    run(&mut i, "tau = normal_rng(-0.5, 1);").unwrap();
    assert!(i.env["tau"].to_reals().iter().all(|&x| x >= 0.0));
}

#[test]
fn shape_and_type_errors() {
    let mut i = interp("int n; vector[2] v; real x;", 1);
    assert!(run(&mut i, "n = 1.5;").is_err());
    assert!(run(&mut i, "x = v;").is_err());
    run(&mut i, "v[2] = 4;").unwrap();
    assert!(run(&mut i, "v[3] = 1;").is_err());
    assert!(run(&mut i, "x = y;").is_err());
    run(&mut i, "x = 7 / 2;").unwrap();
    assert_eq!(i.env["x"], Value::Real(3.0));
}

#[test]
fn densities_sum_over_sequences() {
    let mut i = interp("real x;", 1);
    run(&mut i, "x = normal_lpdf({1} | 0, 1);".replace("{1}", "1").as_str()).unwrap();
    let one = dist::lpdf("normal", 1.0, &[0.0, 1.0]);
    assert_eq!(i.env["x"], Value::Real(one));
    i.target = 0.0;
    i.env.insert("v".into(), Value::RealArray(vec![1.0, 1.0]));
    i.log_density(&[parse_stmt("target += normal_lpdf(v | 0, 1);").unwrap()])
        .unwrap();
    assert!((i.target - 2.0 * one).abs() < 1e-15);
    let lp = i.log_density(&[parse_stmt("reject(\"no\");").unwrap()]).unwrap();
    assert_eq!(lp, f64::NEG_INFINITY);
}

#[test]
fn exponential_rng_mean() {
    let mut i = interp("real x[100000];", 11);
    run(&mut i, "x = exponential_rng(2);").unwrap();
    let x = i.env["x"].to_reals();
    let se = 0.5 / (x.len() as f64).sqrt();
    assert!((stats::mean(&x) - 0.5).abs() < 4.0 * se);
}

#[test]
fn plan_runs_are_deterministic() {
    let a = Analysis::new(fixtures::EIGHT_SCHOOLS).unwrap();
    let plan = a.plan(Mode::Prior, &mut Policy::AssumeAllYes).unwrap();
    let data = data_for("eight_schools", &a.program);
    let r1 = run_plan(&plan, &a.program, &data, 3, 9, &fast()).unwrap();
    let r2 = run_plan(&plan, &a.program, &data, 3, 9, &fast()).unwrap();
    assert_eq!(r1.table.nrows(), 3);
    assert_eq!(r1.table.variables(), ["mu", "tau", "theta"]);
    assert_eq!(r1.table.columns.len(), 10);
    assert_eq!(r1.table.to_csv_string(), r2.table.to_csv_string());
    let r3 = run_plan(&plan, &a.program, &data, 3, 10, &fast()).unwrap();
    assert_ne!(r1.table.rows, r3.table.rows);
}

#[test]
fn rows_do_not_depend_on_row_count() {
    let a = Analysis::new(fixtures::EIGHT_SCHOOLS).unwrap();
    let plan = a.plan(Mode::Prior, &mut Policy::AssumeAllYes).unwrap();
    let data = data_for("eight_schools", &a.program);
    let short = run_plan(&plan, &a.program, &data, 2, 4, &fast()).unwrap();
    let long = run_plan(&plan, &a.program, &data, 5, 4, &fast()).unwrap();
    assert_eq!(short.table.rows[..], long.table.rows[..2]);
}

#[test]
fn empty_plan_gives_empty_table() {
    let a = Analysis::new(fixtures::EIGHT_SCHOOLS).unwrap();
    let mut plan = a.plan(Mode::Prior, &mut Policy::AssumeAllYes).unwrap();
    plan.segments.clear();
    let r = run_plan(&plan, &a.program, &Env::new(), 4, 1, &fast()).unwrap();
    assert!(r.table.columns.is_empty());
    assert_eq!(r.table.nrows(), 4);
}

#[test]
fn ppc_plan_has_simulated_data_column() {
    let a = Analysis::new(fixtures::EIGHT_SCHOOLS).unwrap();
    let (prior, pred) = a.ppc_plans(&mut Policy::AssumeAllYes).unwrap();
    let plan = crate::codegen::prior_predictive_plan(&prior, &pred, &a.program);
    let mut data = data_for("eight_schools", &a.program);
    data.remove("y");
    let r = run_plan(&plan, &a.program, &data, 2, 1, &fast()).unwrap();
    assert_eq!(r.table.variables(), ["mu", "tau", "theta", "y_sim"]);
}

#[test]
fn missing_input_is_reported() {
    let a = Analysis::new(fixtures::EIGHT_SCHOOLS).unwrap();
    let plan = a.plan(Mode::Prior, &mut Policy::AssumeAllYes).unwrap();
    let e = run_plan(&plan, &a.program, &Env::new(), 1, 1, &fast()).unwrap_err();
    assert!(e.to_string().contains("`J`"), "{e}");
}

fn synthesized_matches_plan(name: &str) {
    let src = fixtures::ALL.iter().find(|(n, _)| *n == name).unwrap().1;
    let a = Analysis::new(src).unwrap();
    let (prior, pred) = a.ppc_plans(&mut Policy::AssumeAllYes).unwrap();
    let plan = crate::codegen::prior_predictive_plan(&prior, &pred, &a.program);
    let progs = crate::codegen::synthesize_ppc(&prior, &pred, &a.program).unwrap();
    let mut data = data_for(name, &a.program);
    for v in plan.renamed.keys() {
        data.remove(v);
    }
    let direct = run_plan(&plan, &a.program, &data, 25, 17, &fast()).unwrap();
    let chained = run_programs(&progs, &data, 25, 17, &fast()).unwrap();
    assert_eq!(direct.table.columns, chained.table.columns, "{name}");
    assert_eq!(direct.table.rows, chained.table.rows, "{name}");
}

#[test]
fn synthesis_faithfulness() {
    for name in ["eight_schools", "chain", "intermediate", "looped", "normal_normal"] {
        synthesized_matches_plan(name);
    }
}

#[test]
fn handoff_through_csv_is_exact() {
    let a = Analysis::new(fixtures::CHAIN).unwrap();
    let progs = a.ppc(&mut Policy::AssumeAllYes).unwrap();
    let data = Env::new();
    let first = run_program(&progs[0].program, &data, None, 5, 3, &fast(), &progs[0].draws).unwrap();
    let back = DrawTable::read_csv(first.table.to_csv_string().as_bytes()).unwrap();
    let second = run_program(&progs[1].program, &data, Some(&back), 5, 3, &fast(), &progs[1].draws).unwrap();
    let direct = run_programs(&progs, &data, 5, 3, &fast()).unwrap();
    assert_eq!(direct.table.select(&progs[1].draws).unwrap().rows, second.table.rows);
}

#[test]
fn half_normal_draws_respect_reject() {
    let a = Analysis::new(fixtures::HALF_NORMAL).unwrap();
    let plan = a.plan(Mode::Full, &mut Policy::AssumeAllYes).unwrap();
    assert_eq!(plan.segments[0].label, Label::Pdf);
    let r = run_plan(&plan, &a.program, &Env::new(), 2000, 5, &fast()).unwrap();
    let x = r.table.column("x").unwrap();
    assert!(x.iter().all(|&v| v >= 0.0));
    let m = stats::mean(&x);
    let expect = (2.0 / std::f64::consts::PI).sqrt();
    let se = (1.0 - 2.0 / std::f64::consts::PI).sqrt() / (x.len() as f64).sqrt();
    assert!((m - expect).abs() < 4.0 * se, "{m}");
}

#[test]
fn reference_sampler_avoids_rejected_region() {
    let a = Analysis::new(fixtures::HALF_NORMAL).unwrap();
    let g = a.restricted(Mode::Full).unwrap();
    let r = reference_joint_sampler(&g, &a.program, &a.deps, &Env::new(), 2000, 1, &MhConfig::default()).unwrap();
    assert!(r.table.column("x").unwrap().iter().all(|&v| v >= 0.0));
}

#[test]
fn discrete_parameters_cannot_be_sampled_by_metropolis() {
    let p = parse("parameters { int k; } model { target += -k; }").unwrap();
    let a = Analysis::from_program(p);
    let plan = a.plan(Mode::Full, &mut Policy::AssumeAllYes).unwrap();
    let e = run_plan(&plan, &a.program, &Env::new(), 1, 1, &fast()).unwrap_err();
    assert!(e.to_string().contains("integer"), "{e}");
}

#[test]
fn nan_density_at_initialization_is_an_error() {
    let p = parse("parameters { real x; } model { target += sqrt(-1 - x^2); }").unwrap();
    let a = Analysis::from_program(p);
    let plan = a.plan(Mode::Full, &mut Policy::AssumeAllYes).unwrap();
    let e = run_plan(&plan, &a.program, &Env::new(), 1, 1, &fast()).unwrap_err();
    assert!(e.to_string().contains("NaN"), "{e}");
}

#[test]
fn all_rejected_proposals_produce_a_warning() {
    let p = parse("parameters { real<lower=0, upper=1e-9> x; } model { target += -x; }").unwrap();
    let a = Analysis::from_program(p);
    let plan = a.plan(Mode::Full, &mut Policy::AssumeAllYes).unwrap();
    let r = run_plan(&plan, &a.program, &Env::new(), 2, 1, &fast()).unwrap();
    assert_eq!(r.warnings().len(), 1);
}

#[test]
fn sbc_bundle_runs() {
    let a = Analysis::new(fixtures::NORMAL_NORMAL).unwrap();
    let bundle = a.sbc(&mut Policy::AssumeAllYes, 7).unwrap();
    let mut data = data_for("normal_normal", &a.program);
    data.remove("y");
    let r = run_sbc(&bundle, &data, 6, 2, &fast()).unwrap();
    assert_eq!(r.ranks["mu"].len(), 6);
    assert!(r.ranks["mu"].iter().all(|&k| k <= 7));

    let a = Analysis::new(fixtures::EIGHT_SCHOOLS).unwrap();
    let bundle = a.sbc(&mut Policy::AssumeAllYes, 3).unwrap();
    let mut data = data_for("eight_schools", &a.program);
    data.remove("y");
    let r = run_sbc(&bundle, &data, 2, 2, &fast()).unwrap();
    assert_eq!(r.ranks.len(), 10);
    assert!(r.ranks.contains_key("theta.8"));
}

#[test]
fn chain_program_uses_thinning() {
    let p = parse("parameters { real x; } model { x ~ normal(0, 1); } generated quantities { real y; y = 2 * x; }")
        .unwrap();
    let cfg = MhConfig { thin: 3, ..fast() };
    let r = run_program_chain(&p, &Env::new(), 10, 1, 0, &cfg, &["x".into(), "y".into()]).unwrap();
    assert_eq!(r.table.nrows(), 10);
    assert_eq!(r.stats["x"].proposed as usize, cfg.warmup + 30);
    for row in &r.table.rows {
        assert_eq!(row[1], 2.0 * row[0]);
    }
    assert!(p.block(BlockKind::Model).is_some());
}
