//! Acceptance checks, one PASS/FAIL line per criterion. Tolerances and
//! sampler settings are pinned here.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use fwdppl::codegen::{prior_predictive_plan, Label};
use fwdppl::factorgraph::{Factor, FactorForm, FactorGraph, FactorId, VarKind};
use fwdppl::fixtures;
use fwdppl::frontend::{parse_stmt, stmt_summary, BlockKind, ElemType};
use fwdppl::pipeline::{Analysis, Mode, Policy};
use fwdppl::runtime::stats::{ks_one_sample, ks_pvalue, mean, rank_uniformity, sbc_rank, sd};
use fwdppl::runtime::{
    dist, equivalence_check, joint_statements, program_decls, read_env, reference_joint_sampler, run_plan, DrawTable,
    Env, Interp, MhConfig, Streams, Tolerances, Value,
};
use fwdppl::transform::{
    contract, enumerate_sound, recognizable_edges, solve_selection_sets, Dag, RecognizableSet, Recognized,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn analysis(src: &str) -> Analysis {
    Analysis::new(src).expect("fixture parses")
}

fn data(name: &str, a: &Analysis) -> Env {
    match fixtures::data(name) {
        Some(csv) => read_env(csv.as_bytes(), &program_decls(&a.program)).expect("fixture data"),
        None => Env::new(),
    }
}

fn fixture_path(name: &str) -> String {
    format!("{}/../core/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn fwdppl(args: &[&str], stdin: &str) -> std::process::Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_fwdppl"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn fid(line: u32) -> FactorId {
    FactorId::new(line)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let a = analysis(fixtures::EIGHT_SCHOOLS);
    let t = a
        .transform(Mode::Prior, &mut Policy::FailOnAmbiguous)
        .map_err(|e| e.to_string())?;
    let vars: Vec<&str> = t.graph.variables.keys().map(String::as_str).collect();
    ensure(vars == ["mu", "tau", "theta"], || format!("variables {vars:?}"))?;
    ensure(t.graph.factors.len() == 3, || {
        format!("{} factors", t.graph.factors.len())
    })?;
    let r = t.recognizable.pairs();
    let want = BTreeSet::from([("tau".to_string(), fid(13)), ("theta".to_string(), fid(14))]);
    ensure(r == want, || format!("r = {r:?}"))?;
    ensure(t.recognizable.edges["theta"].dist == "normal", || {
        "theta edge is not normal".into()
    })?;
    ensure(t.selections.len() == 1, || format!("|S| = {}", t.selections.len()))?;
    ensure(t.transcript.is_empty() && t.queries.is_empty(), || {
        "user was queried".into()
    })?;

    let summary = |plan: &fwdppl::codegen::SamplingPlan| -> Vec<(Label, Vec<String>)> {
        plan.segments
            .iter()
            .map(|s| (s.label, s.statements.iter().map(stmt_summary).collect()))
            .collect()
    };
    let prior = a.plan_for(&t).map_err(|e| e.to_string())?;
    let want = vec![
        (Label::Pdf, vec!["target += -(mu - 1)^2".to_string()]),
        (Label::Rng, vec!["tau = normal_rng(1, 1)".to_string()]),
        (Label::Rng, vec!["theta = normal_rng(mu, tau)".to_string()]),
    ];
    ensure(summary(&prior) == want, || {
        format!("prior segments {:?}", summary(&prior))
    })?;
    let pred = a
        .plan(Mode::Predictive, &mut Policy::FailOnAmbiguous)
        .map_err(|e| e.to_string())?;
    let want = vec![(Label::Rng, vec!["y = normal_rng(theta, sigma)".to_string()])];
    ensure(summary(&pred) == want, || {
        format!("predictive segments {:?}", summary(&pred))
    })?;
    let progs = a.ppc(&mut Policy::FailOnAmbiguous).map_err(|e| e.to_string())?;
    ensure(progs.len() == 1, || format!("{} PPC programs", progs.len()))?;
    within(start.elapsed(), 1.0)?;
    Ok("3 segments + 1 predictive, |S| = 1, no queries, one PPC program".into())
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let a = analysis(fixtures::QUERY);
    let g = a.restricted(Mode::Prior).map_err(|e| e.to_string())?;
    let s = solve_selection_sets(&g, &recognizable_edges(&g));
    ensure(s.len() == 2, || format!("|S| = {}", s.len()))?;
    let diff: BTreeSet<_> = s[0].0.symmetric_difference(&s[1].0).cloned().collect();
    let want = BTreeSet::from([("c".to_string(), fid(16)), ("e".to_string(), fid(16))]);
    ensure(diff == want, || format!("selection sets differ in {diff:?}"))?;

    let mut pick_pair = Policy::Ask(Box::new(|p| {
        let k = p.options.iter().position(|o| *o == BTreeSet::from([fid(15), fid(16)]));
        Ok(k.map_or(0, |k| k + 1))
    }));
    let t = a.transform(Mode::Prior, &mut pick_pair).map_err(|e| e.to_string())?;
    ensure(t.dag.assign["e"] == BTreeSet::from([fid(15), fid(16)]), || {
        format!("A(e) = {:?}", t.dag.assign["e"])
    })?;

    let out = fwdppl(&["transform", &fixture_path("query.ppl")], "0\n");
    ensure(out.status.code() == Some(3), || {
        format!("answer 0 exited {:?}", out.status.code())
    })?;
    ensure(out.stdout.is_empty(), || "a DAG was printed after answer 0".into())?;
    within(start.elapsed(), 1.0)?;
    Ok("|S| = 2 differing in F16; pair answer gives A(e) = {F15, F16}; answer 0 exits 3".into())
}

fn criterion_3() -> Outcome {
    let a = analysis(fixtures::TWO_ORDERS);
    let g = a.restricted(Mode::Prior).map_err(|e| e.to_string())?;
    let s = solve_selection_sets(&g, &recognizable_edges(&g));
    ensure(s.len() == 2, || format!("two_orders |S| = {}", s.len()))?;
    let orders: BTreeSet<Vec<(String, String)>> = s
        .iter()
        .map(|sel| contract(&g, sel).map(|d| d.edges.into_iter().collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let want = BTreeSet::from([
        vec![("x".to_string(), "y".to_string())],
        vec![("y".to_string(), "x".to_string())],
    ]);
    ensure(orders == want, || format!("orderings {orders:?}"))?;

    let a = analysis(fixtures::TRIANGLE);
    let g = a.restricted(Mode::Prior).map_err(|e| e.to_string())?;
    let s = solve_selection_sets(&g, &recognizable_edges(&g));
    ensure(s.is_empty(), || format!("triangle |S| = {}", s.len()))?;
    let out = fwdppl(&["transform", &fixture_path("triangle.ppl"), "--assume-all-yes"], "");
    ensure(out.status.code() == Some(3), || {
        format!("triangle exited {:?}", out.status.code())
    })?;
    let err = String::from_utf8_lossy(&out.stderr);
    ensure(err.contains("no forward-sampling form exists"), || {
        format!("stderr: {err}")
    })?;
    Ok("x->y and y->x for two_orders; triangle has S = {} and exits 3".into())
}

/// Up to 4 variables and 5 factors of arity up to 3, with random
/// recognizable edges.
fn random_graph(rng: &mut impl Rng) -> (FactorGraph, RecognizableSet) {
    let nv = rng.random_range(1..=4);
    let nf = rng.random_range(1..=5);
    let names: Vec<String> = (0..nv).map(|k| format!("v{k}")).collect();
    let mut g = FactorGraph::default();
    for n in &names {
        g.variables.insert(n.clone(), VarKind::Param);
    }
    let mut r = RecognizableSet::default();
    for k in 0..nf {
        let id = FactorId::new(k as u32 + 1);
        let arity = rng.random_range(1..=3.min(nv));
        let mut nei = BTreeSet::new();
        while nei.len() < arity {
            nei.insert(names[rng.random_range(0..nv)].clone());
        }
        g.factors.insert(
            id,
            Factor {
                id,
                stmt: parse_stmt("target += 0;").unwrap(),
                deps: BTreeSet::new(),
                form: FactorForm::Target,
                pretty: format!("f{k}"),
                held: BTreeSet::new(),
                opaque: false,
            },
        );
        for v in &nei {
            g.edges.insert((v.clone(), id));
        }
        if rng.random_bool(0.3) {
            let v = nei.iter().nth(rng.random_range(0..nei.len())).unwrap().clone();
            if !r.covers(&v) {
                let rec = Recognized {
                    var: v.clone(),
                    factor: id,
                    dist: "normal".into(),
                    args: Vec::new(),
                };
                r.edges.insert(v, rec);
            }
        }
    }
    (g, r)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut nonempty = 0;
    for k in 0..200 {
        let (g, r) = random_graph(&mut rng);
        let sat = solve_selection_sets(&g, &r);
        let brute = enumerate_sound(&g, &r);
        ensure(sat == brute, || {
            format!("graph {k}: SAT {} sets, brute force {}", sat.len(), brute.len())
        })?;
        nonempty += usize::from(!sat.is_empty());
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("200 graphs agree ({nonempty} with S nonempty)"))
}

/// Random values for every real data and parameter variable, inside the
/// declared bounds. Integers come from the fixture data.
fn random_env(name: &str, a: &Analysis, rng: &mut impl Rng) -> Env {
    let decls = program_decls(&a.program);
    let ints: Env = data(name, a).into_iter().filter(|(_, v)| v.is_int()).collect();
    let mut interp = Interp::new(decls.clone(), ints, Streams::new(0, 0));
    let names = a
        .program
        .declared_in(BlockKind::Data)
        .into_iter()
        .chain(a.program.declared_in(BlockKind::Parameters));
    for v in names {
        if interp.env.contains_key(&v) || decls[&v].elem_type() == ElemType::Int {
            continue;
        }
        let len = interp.declared_len(&v).expect("shape");
        let (lo, hi) = interp.bounds(&v).expect("bounds");
        let mut one = || match (lo, hi) {
            (None, None) => rng.random_range(-3.0..3.0),
            (Some(l), None) => l + rng.random_range(-2.0f64..1.5).exp(),
            (None, Some(h)) => h - rng.random_range(-2.0f64..1.5).exp(),
            (Some(l), Some(h)) => rng.random_range(l..h),
        };
        let value = match len {
            None => Value::Real(one()),
            Some(n) => Value::RealArray((0..n).map(|_| one()).collect()),
        };
        interp.env.insert(v, value);
    }
    interp.env
}

fn log_density(a: &Analysis, g: &FactorGraph, env: &Env) -> Result<f64, String> {
    let stmts = joint_statements(g, &a.program, &a.deps);
    let mut interp = Interp::new(program_decls(&a.program), env.clone(), Streams::new(0, 0));
    interp.log_density(&stmts).map_err(|e| e.to_string())
}

/// `g` with only the factors in `keep`.
fn subgraph(g: &FactorGraph, keep: &BTreeSet<FactorId>) -> FactorGraph {
    let mut s = g.clone();
    s.factors.retain(|f, _| keep.contains(f));
    s.edges.retain(|(_, f)| keep.contains(f));
    s
}

fn same(x: f64, y: f64, tol: f64) -> bool {
    x == y || (x - y).abs() <= tol
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    let mut worst = 0.0f64;
    for (name, src) in fixtures::ALL {
        let a = analysis(src);
        for mode in [Mode::Prior, Mode::Full] {
            let Ok(g) = a.restricted(mode) else { continue };
            let r = recognizable_edges(&g);
            for s in solve_selection_sets(&g, &r) {
                let dag = contract(&g, &s).map_err(|e| e.to_string())?;
                for _ in 0..100 {
                    let env = random_env(name, &a, &mut rng);
                    let joint = log_density(&a, &g, &env)?;
                    let mut sum = 0.0;
                    for fs in dag.assign.values() {
                        sum += log_density(&a, &subgraph(&g, fs), &env)?;
                    }
                    ensure(same(joint, sum, 1e-12), || {
                        format!("{name} ({mode}) {s}: joint {joint} vs per-variable sum {sum}")
                    })?;
                    if joint.is_finite() {
                        worst = worst.max((joint - sum).abs());
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} evaluations, max |diff| {worst:.1e}"))
}

/// Per-variable log marginal densities of a two-variable DAG on the circle,
/// by periodic trapezoid quadrature with `n` nodes.
struct CircleDag<'a> {
    a: &'a Analysis,
    root: (String, FactorGraph),
    child: (String, FactorGraph),
    nodes: Vec<f64>,
    /// Normalizer of the root density.
    z_root: f64,
    /// Normalizer of the child density at each root node.
    z_child: Vec<f64>,
}

impl<'a> CircleDag<'a> {
    fn new(a: &'a Analysis, g: &FactorGraph, dag: &Dag, n: usize) -> Result<Self, String> {
        let order = dag.topo_order(&|_| 0);
        let [r, c] = <[String; 2]>::try_from(order).map_err(|_| "expected two variables".to_string())?;
        let nodes: Vec<f64> = (0..n).map(|k| 2.0 * PI * (k as f64 + 0.5) / n as f64).collect();
        let h = 2.0 * PI / n as f64;
        let mut me = CircleDag {
            a,
            root: (r.clone(), subgraph(g, &dag.assign[&r])),
            child: (c.clone(), subgraph(g, &dag.assign[&c])),
            nodes,
            z_root: 0.0,
            z_child: Vec::new(),
        };
        me.z_root = h
            * (0..n)
                .map(|k| me.eval_root(me.nodes[k], 1.0).map(f64::exp))
                .sum::<Result<f64, _>>()?;
        me.z_child = (0..n)
            .map(|j| {
                Ok(h * (0..n)
                    .map(|k| me.eval_child(me.nodes[k], me.nodes[j]).map(f64::exp))
                    .sum::<Result<f64, String>>()?)
            })
            .collect::<Result<_, String>>()?;
        Ok(me)
    }

    fn eval(&self, g: &FactorGraph, vals: [(&str, f64); 2]) -> Result<f64, String> {
        let env: Env = vals.iter().map(|(v, x)| (v.to_string(), Value::Real(*x))).collect();
        log_density(self.a, g, &env)
    }

    /// Root factors see only the root; `other` fills the child slot.
    fn eval_root(&self, r: f64, other: f64) -> Result<f64, String> {
        self.eval(&self.root.1, [(&self.root.0, r), (&self.child.0, other)])
    }

    fn eval_child(&self, c: f64, r: f64) -> Result<f64, String> {
        self.eval(&self.child.1, [(&self.root.0, r), (&self.child.0, c)])
    }

    fn log_marginal(&self, var: &str, x: f64) -> Result<f64, String> {
        if var == self.root.0 {
            return Ok(self.eval_root(x, 1.0)? - self.z_root.ln());
        }
        let h = 2.0 * PI / self.nodes.len() as f64;
        let mut m = 0.0;
        for (j, &r) in self.nodes.iter().enumerate() {
            let cond = (self.eval_child(x, r)?).exp() / self.z_child[j];
            m += h * cond * self.eval_root(r, 1.0)?.exp() / self.z_root;
        }
        Ok(m.ln())
    }
}

fn criterion_6() -> Outcome {
    let a = analysis(fixtures::CIRCULAR);
    let g = a.restricted(Mode::Prior).map_err(|e| e.to_string())?;
    let t = a
        .transform(Mode::Prior, &mut Policy::AssumeAllYes)
        .map_err(|e| e.to_string())?;
    ensure(t.remaining.len() == 2, || format!("|S*| = {}", t.remaining.len()))?;
    let dags: Vec<CircleDag> = t
        .remaining
        .iter()
        .map(|s| CircleDag::new(&a, &g, &contract(&g, s).map_err(|e| e.to_string())?, 64))
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut spread = 0.0f64;
    for v in ["x", "y"] {
        let mut diffs = Vec::new();
        for _ in 0..100 {
            let p = rng.random_range(0.0..2.0 * PI);
            diffs.push(dags[0].log_marginal(v, p)? - dags[1].log_marginal(v, p)?);
        }
        let lo = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ensure(hi - lo <= 1e-9, || {
            format!("{v}: log-density difference spread {:.3e}", hi - lo)
        })?;
        spread = spread.max(hi - lo);
    }
    Ok(format!("circular fixture, both members of S*: max spread {spread:.1e}"))
}

/// One fresh chain per forward draw of the one-dimensional mu segment.
const FORWARD: MhConfig = MhConfig {
    step_size: 1.0,
    warmup: 150,
    thin: 1,
    inner_iters: 50,
};

/// The joint reference chain over mu, tau and theta.
const REFERENCE: MhConfig = MhConfig {
    step_size: 0.5,
    warmup: 2000,
    thin: 10,
    inner_iters: 1,
};

const DRAWS: usize = 50_000;

fn criterion_7(reference_out: &mut Option<DrawTable>) -> Outcome {
    let start = Instant::now();
    let a = analysis(fixtures::EIGHT_SCHOOLS);
    let d = data("eight_schools", &a);
    let plan = a
        .plan(Mode::Prior, &mut Policy::AssumeAllYes)
        .map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let fwd = run_plan(&plan, &a.program, &d, DRAWS, 7, &FORWARD).map_err(|e| e.to_string())?;
    let t_fwd = t0.elapsed();
    let g = a.restricted(Mode::Prior).map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let reference =
        reference_joint_sampler(&g, &a.program, &a.deps, &d, DRAWS, 8, &REFERENCE).map_err(|e| e.to_string())?;
    let t_ref = t0.elapsed();
    let report = equivalence_check(&fwd.table, &reference.table, &Tolerances::default())?;
    *reference_out = Some(reference.table);
    ensure(report.pass, || format!("equivalence failed:\n{report}"))?;

    let mu = fwd.table.column("mu").unwrap();
    let sd_mu = 0.5f64.sqrt();
    let rel = sd(&mu) / sd_mu - 1.0;
    ensure(rel.abs() <= 0.02, || {
        format!("sd(mu) = {:.4}, off by {:.1}%", sd(&mu), 100.0 * rel)
    })?;
    let ks = ks_one_sample(&mu, |x| dist::cdf("normal", x, &[1.0, sd_mu]).unwrap());
    let p = ks_pvalue(ks, mu.len() as f64);
    ensure(p > 0.001, || format!("mu vs Normal(1, sqrt(0.5)): KS p = {p:.2e}"))?;

    let nn = analysis(fixtures::NORMAL_NORMAL);
    let nd = data("normal_normal", &nn);
    let rng_plan = nn
        .plan(Mode::Prior, &mut Policy::AssumeAllYes)
        .map_err(|e| e.to_string())?;
    ensure(rng_plan.num_pdf() == 0, || {
        "normal_normal prior plan has a PDF segment".into()
    })?;
    let t0 = Instant::now();
    run_plan(&rng_plan, &nn.program, &nd, DRAWS, 7, &REFERENCE).map_err(|e| e.to_string())?;
    let t_rng = t0.elapsed();
    let g = nn.restricted(Mode::Prior).map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    reference_joint_sampler(&g, &nn.program, &nn.deps, &nd, DRAWS, 8, &REFERENCE).map_err(|e| e.to_string())?;
    let t_rng_ref = t0.elapsed();
    ensure(t_rng < t_rng_ref, || {
        format!("all-RNG forward {t_rng:?} not faster than reference {t_rng_ref:?}")
    })?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "mean(mu) {:.4}, sd(mu) {:.4} ({:+.2}%), KS p {p:.2}; eight schools forward {:.1}s vs reference {:.1}s; all-RNG forward {:.3}s vs reference {:.2}s",
        mean(&mu),
        sd(&mu),
        100.0 * rel,
        t_fwd.as_secs_f64(),
        t_ref.as_secs_f64(),
        t_rng.as_secs_f64(),
        t_rng_ref.as_secs_f64()
    ))
}

fn criterion_8(reference: Option<DrawTable>) -> Outcome {
    let a = analysis(fixtures::EIGHT_SCHOOLS);
    let d = data("eight_schools", &a);
    let reference = match reference {
        Some(t) => t,
        None => {
            let g = a.restricted(Mode::Prior).map_err(|e| e.to_string())?;
            reference_joint_sampler(&g, &a.program, &a.deps, &d, DRAWS, 8, &REFERENCE)
                .map_err(|e| e.to_string())?
                .table
        }
    };
    let mut t = a
        .transform(Mode::Prior, &mut Policy::AssumeAllYes)
        .map_err(|e| e.to_string())?;
    t.drop_factor(fid(12))?;
    let plan = a.plan_for(&t).map_err(|e| e.to_string())?;
    let mutant = run_plan(&plan, &a.program, &d, 10_000, 9, &FORWARD).map_err(|e| e.to_string())?;
    let report = equivalence_check(&mutant.table, &reference, &Tolerances::default())?;
    let mu = report.variable("mu").ok_or("no mu in report")?;
    ensure(!mu.pass, || format!("mutant passed on mu:\n{report}"))?;
    ensure(!report.pass, || "mutant passed overall".into())?;
    let verdicts: Vec<String> = report
        .variables
        .iter()
        .map(|v| format!("{} {}", v.var, if v.pass { "PASS" } else { "FAIL" }))
        .collect();
    Ok(format!("F12 dropped from A(mu): {}", verdicts.join(", ")))
}

/// Exact posterior draws for mu given `y` under mu ~ N(0, 1), y_i ~ N(mu, 1),
/// shifted by `shift` posterior standard deviations.
fn conjugate_draws(y: &[f64], shift: f64, l: usize, rng: &mut impl Rng) -> Vec<f64> {
    let prec = 1.0 + y.len() as f64;
    let m = y.iter().sum::<f64>() / prec;
    let s = prec.powf(-0.5);
    (0..l)
        .map(|_| dist::draw("normal", &[m + shift * s, s], rng).unwrap())
        .collect()
}

fn criterion_9() -> Outcome {
    const REPS: usize = 500;
    const L: usize = 31;
    const BINS: usize = 8;
    let start = Instant::now();
    let a = analysis(fixtures::NORMAL_NORMAL);
    let (prior, pred) = a.ppc_plans(&mut Policy::AssumeAllYes).map_err(|e| e.to_string())?;
    let plan = prior_predictive_plan(&prior, &pred, &a.program);
    let mut d = data("normal_normal", &a);
    d.remove("y");
    let sims = run_plan(&plan, &a.program, &d, REPS, 9, &FORWARD).map_err(|e| e.to_string())?;
    let ys = sims.table.var_columns("y_sim");
    let mu = sims.table.column("mu").ok_or("no mu column")?;
    let mut p = BTreeMap::new();
    for (label, shift) in [("exact", 0.0), ("shifted", 1.0)] {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let ranks: Vec<usize> = (0..REPS)
            .map(|r| {
                let y: Vec<f64> = ys.iter().map(|&i| sims.table.rows[r][i]).collect();
                sbc_rank(mu[r], &conjugate_draws(&y, shift, L, &mut rng))
            })
            .collect();
        p.insert(label, rank_uniformity(&ranks, L, BINS).p_value);
    }
    ensure(p["exact"] > 0.001, || format!("exact posterior p = {:.2e}", p["exact"]))?;
    ensure(p["shifted"] < 0.001, || {
        format!("shifted posterior p = {:.2e}", p["shifted"])
    })?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "{REPS} replications, L = {L}: exact p = {:.3}, +1 sd mutant p = {:.1e}",
        p["exact"], p["shifted"]
    ))
}

fn run_twice(args: &[&str], stdin: &str) -> Result<(), String> {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out_dir = dir.path().join("out");
        let mut full: Vec<&str> = args.to_vec();
        let out_str = out_dir.to_str().unwrap().to_string();
        full.extend(["--out", &out_str]);
        let out = fwdppl(&full, stdin);
        ensure(out.status.success(), || {
            format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
        })?;
        outputs.push(read_dir(&out_dir)?);
    }
    ensure(!outputs[0].is_empty(), || format!("{args:?} wrote no files"))?;
    ensure(outputs[0] == outputs[1], || {
        format!("{args:?} output differs between runs")
    })
}

fn read_dir(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(files)
}

fn criterion_10() -> Outcome {
    let es = fixture_path("eight_schools.ppl");
    let es_data = fixture_path("eight_schools.data.csv");
    let nn = fixture_path("normal_normal.ppl");
    let nn_data = fixture_path("normal_normal.data.csv");
    let query = fixture_path("query.ppl");
    let fast = ["--warmup", "50", "--inner-iters", "20"];
    let runs: Vec<(Vec<&str>, &str)> = vec![
        (vec!["graph", &es, "--emit", "fg,dep-graph"], ""),
        (vec!["transform", &es, "--emit", "fg,dag,cnf,selections,dep-graph"], ""),
        (vec!["transform", &query, "--emit", "dag,selections"], "1\n"),
        (vec!["ppc", &es], ""),
        (vec!["sbc", &es], ""),
        (
            [
                vec!["sbc", &nn, "--reps", "20", "--seed", "3", "--data", &nn_data],
                fast.to_vec(),
            ]
            .concat(),
            "",
        ),
        (
            [
                vec!["sample", &es, "--seed", "11", "--draws", "200", "--data", &es_data],
                fast.to_vec(),
            ]
            .concat(),
            "",
        ),
        (
            [
                vec!["check", &es, "--seed", "11", "--draws", "200", "--data", &es_data],
                fast.to_vec(),
            ]
            .concat(),
            "",
        ),
    ];
    for (args, stdin) in &runs {
        run_twice(args, stdin)?;
    }
    Ok(format!("{} commands byte-identical across two runs", runs.len()))
}

type Criterion<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

fn main() -> ExitCode {
    let mut reference = None;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 eight-schools pipeline", Box::new(criterion_1)),
        ("2 query fixture", Box::new(criterion_2)),
        ("3 challenge examples", Box::new(criterion_3)),
        ("4 SAT oracle equivalence", Box::new(criterion_4)),
        ("5 density preservation", Box::new(criterion_5)),
        ("6 proportionality", Box::new(criterion_6)),
        ("7 forward vs reference", Box::new(|| criterion_7(&mut reference))),
    ];
    let mut failed = 0;
    let mut run = |name: &str, f: Box<dyn FnOnce() -> Outcome + '_>| {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {name}: PASS ({secs:.2}s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({secs:.2}s) {why}");
            }
        }
    };
    for (name, f) in criteria {
        run(name, f);
    }
    run("8 mutant detection", Box::new(|| criterion_8(reference)));
    run("9 SBC self-consistency", Box::new(criterion_9));
    run("10 determinism", Box::new(criterion_10));
    if failed == 0 {
        println!("acceptance: all 10 criteria PASS");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 10 criteria FAIL");
        ExitCode::FAILURE
    }
}
