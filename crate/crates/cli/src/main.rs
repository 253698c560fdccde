//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage, 2 parse or analysis error, 3 no
//! forward-sampling form, 4 runtime error.

mod query;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fwdppl::codegen::{chain_manifest, CodegenError, SynthProgram};
use fwdppl::factorgraph::FactorId;
use fwdppl::pipeline::{Analysis, Mode, PipelineError, Policy, Transformed};
use fwdppl::runtime::{
    equivalence_check, program_decls, read_env, reference_joint_sampler, run_plan, run_sbc, Env, MhConfig, Run,
    Tolerances,
};
use fwdppl::transform::encode;

#[derive(Parser)]
#[command(
    name = "fwdppl",
    version,
    about = "Derive forward samplers from probabilistic programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the factor graph of a program.
    Graph(GraphArgs),
    /// Find a DAG form of the factor graph.
    Transform(TransformArgs),
    /// Synthesize prior predictive check programs.
    Ppc(PpcArgs),
    /// Synthesize (and optionally run) simulation-based calibration.
    Sbc(SbcArgs),
    /// Draw from the forward sampler.
    Sample(SampleArgs),
    /// Compare forward draws with a joint Metropolis reference sampler.
    Check(SampleArgs),
}

#[derive(Args)]
struct Common {
    /// Program source file.
    input: PathBuf,
    /// Directory for output files; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Fg,
    Dag,
    Cnf,
    Selections,
    DepGraph,
}

#[derive(Args)]
#[group(multiple = false)]
struct QueryArgs {
    /// Answers file with `var=<option>` lines.
    #[arg(long)]
    answers: Option<PathBuf>,
    /// Affirm every candidate density without asking.
    #[arg(long)]
    assume_all_yes: bool,
    /// Exit with code 3 instead of asking.
    #[arg(long)]
    fail_on_ambiguous: bool,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    common: Common,
    /// Restrict the graph first.
    #[arg(long)]
    mode: Option<Mode>,
    /// Artifacts to write: fg, dep-graph.
    #[arg(long, value_delimiter = ',')]
    emit: Vec<Emit>,
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "prior")]
    mode: Mode,
    /// Artifacts to write (default dag).
    #[arg(long, value_delimiter = ',')]
    emit: Vec<Emit>,
    #[command(flatten)]
    query: QueryArgs,
}

#[derive(Args)]
struct PpcArgs {
    /// Program source file.
    input: PathBuf,
    /// Directory for the synthesized programs.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    query: QueryArgs,
}

#[derive(Args)]
struct Mcmc {
    /// Proposal standard deviation.
    #[arg(long)]
    step_size: Option<f64>,
    /// Sweeps before the first draw.
    #[arg(long)]
    warmup: Option<usize>,
    /// Sweeps after warmup for each forward draw.
    #[arg(long)]
    inner_iters: Option<usize>,
    /// Sweeps between draws of the reference chain.
    #[arg(long)]
    thin: Option<usize>,
}

impl Mcmc {
    fn config(&self) -> Result<MhConfig, Failure> {
        let d = MhConfig::default();
        let cfg = MhConfig {
            step_size: self.step_size.unwrap_or(d.step_size),
            warmup: self.warmup.unwrap_or(d.warmup),
            inner_iters: self.inner_iters.unwrap_or(d.inner_iters),
            thin: self.thin.unwrap_or(d.thin),
        };
        cfg.validate().map_err(Failure::usage)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SbcArgs {
    /// Program source file.
    input: PathBuf,
    /// Directory for the synthesized programs.
    #[arg(long)]
    out: PathBuf,
    /// Posterior draws per rank.
    #[arg(long, default_value_t = 31)]
    draws_per_rank: usize,
    /// Run this many replications and write ranks.
    #[arg(long, requires = "seed")]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Histogram bins for the rank uniformity test.
    #[arg(long, default_value_t = 8)]
    bins: usize,
    /// One-row CSV with the data the simulation is conditioned on.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    mcmc: Mcmc,
    #[command(flatten)]
    query: QueryArgs,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "prior")]
    mode: Mode,
    #[arg(long, required = true)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    /// One-row CSV with the held inputs.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Remove a factor from the chosen DAG before sampling.
    #[arg(long)]
    drop_factor: Option<FactorId>,
    #[command(flatten)]
    mcmc: Mcmc,
    #[command(flatten)]
    query: QueryArgs,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Failure {
            code: 4,
            message: message.to_string(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Parse(_) => 2,
            PipelineError::Codegen(CodegenError::Undeclared(_) | CodegenError::UnknownFactor(_)) => 2,
            PipelineError::Answer(_) => 1,
            PipelineError::Restrict(_)
            | PipelineError::Transform(_)
            | PipelineError::Ambiguous(_)
            | PipelineError::Codegen(_) => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Graph(a) => graph(a),
        Command::Transform(a) => transform(a),
        Command::Ppc(a) => ppc(a),
        Command::Sbc(a) => sbc(a),
        Command::Sample(a) => sample(a, false),
        Command::Check(a) => sample(a, true),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<Analysis, Failure> {
    let src = fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let a = Analysis::new(&src).map_err(|e| Failure {
        code: 2,
        message: format!("{}:{e}", path.display()),
    })?;
    for w in &a.warnings {
        eprintln!("warning: {w}");
    }
    if a.graph.factors.is_empty() {
        eprintln!("warning: the model has no factors");
    }
    Ok(a)
}

fn load_data(path: Option<&Path>, a: &Analysis) -> Result<Env, Failure> {
    let Some(path) = path else { return Ok(Env::new()) };
    let text = fs::read(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    read_env(text.as_slice(), &program_decls(&a.program)).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn policy(q: &QueryArgs) -> Result<Policy<'static>, Failure> {
    if q.assume_all_yes {
        return Ok(Policy::AssumeAllYes);
    }
    if q.fail_on_ambiguous {
        return Ok(Policy::FailOnAmbiguous);
    }
    if let Some(path) = &q.answers {
        let text =
            fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
        return Ok(query::from_answers(
            query::parse_answers(&text).map_err(Failure::usage)?,
        ));
    }
    Ok(query::interactive(io::stdin().lock()))
}

/// Warn when candidate densities were affirmed without asking.
fn note_assumptions(q: &QueryArgs, t: &Transformed) {
    if q.assume_all_yes && !t.queries.is_empty() {
        let mut vars: Vec<&str> = t.queries.iter().map(|q| q.var.as_str()).collect();
        vars.dedup();
        eprintln!(
            "warning: assumed every candidate density of {} is constant-normalized",
            vars.join(", ")
        );
    }
}

/// A named output; only `shown` ones go to stdout when there is no `--out`.
struct Artifact {
    file: &'static str,
    text: String,
    shown: bool,
}

fn emit(out: Option<&Path>, artifacts: &[Artifact]) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
            for a in artifacts {
                write_file(&dir.join(a.file), &a.text)?;
            }
        }
        None => {
            let mut stdout = io::stdout().lock();
            for a in artifacts.iter().filter(|a| a.shown) {
                stdout.write_all(a.text.as_bytes()).map_err(Failure::runtime)?;
            }
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn graph(args: GraphArgs) -> Result<(), Failure> {
    let a = load(&args.common.input)?;
    let g = match args.mode {
        None => a.graph.clone(),
        Some(m) => a.restricted(m)?,
    };
    let emits = if args.emit.is_empty() {
        vec![Emit::Fg]
    } else {
        args.emit
    };
    let mut artifacts = Vec::new();
    for e in emits {
        match e {
            Emit::Fg => {
                artifacts.push(Artifact {
                    file: "factorgraph.txt",
                    text: g.serialize(),
                    shown: true,
                });
                artifacts.push(Artifact {
                    file: "factorgraph.dot",
                    text: g.to_dot(),
                    shown: false,
                });
            }
            Emit::DepGraph => artifacts.push(dep_graph(&a)),
            _ => return Err(Failure::usage("graph emits only fg and dep-graph; use transform")),
        }
    }
    emit(args.common.out.as_deref(), &artifacts)
}

fn dep_graph(a: &Analysis) -> Artifact {
    Artifact {
        file: "dep-graph.dot",
        text: a.deps.to_dot(&a.program),
        shown: true,
    }
}

fn transform(args: TransformArgs) -> Result<(), Failure> {
    let a = load(&args.common.input)?;
    let t = a.transform(args.mode, &mut policy(&args.query)?)?;
    note_assumptions(&args.query, &t);
    let emits = if args.emit.is_empty() {
        vec![Emit::Dag]
    } else {
        args.emit
    };
    let mut artifacts = Vec::new();
    for e in emits {
        match e {
            Emit::Fg => artifacts.push(Artifact {
                file: "factorgraph.txt",
                text: t.graph.serialize(),
                shown: true,
            }),
            Emit::Dag => {
                artifacts.push(Artifact {
                    file: "dag.txt",
                    text: t.dag.assignment_table(),
                    shown: true,
                });
                artifacts.push(Artifact {
                    file: "dag.dot",
                    text: t.dag.to_dot(),
                    shown: false,
                });
            }
            Emit::Cnf => artifacts.push(Artifact {
                file: "cnf.dimacs",
                text: encode(&t.graph, &t.recognizable).cnf().to_dimacs(),
                shown: true,
            }),
            Emit::Selections => artifacts.push(Artifact {
                file: "selections.txt",
                text: t.selections_text(),
                shown: true,
            }),
            Emit::DepGraph => artifacts.push(dep_graph(&a)),
        }
    }
    if !t.transcript.is_empty() {
        let text: String = t.transcript.iter().map(|(p, k)| format!("{}={k}\n", p.var)).collect();
        artifacts.push(Artifact {
            file: "answers.txt",
            text,
            shown: false,
        });
    }
    emit(args.common.out.as_deref(), &artifacts)
}

fn write_programs(dir: &Path, progs: &[&SynthProgram], manifest: Option<&str>) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
    for p in progs {
        let file = format!("{}.ppl", p.name);
        write_file(&dir.join(&file), &p.text)?;
        println!("{file}");
    }
    if let Some(m) = manifest {
        write_file(&dir.join("manifest.txt"), m)?;
        println!("manifest.txt");
    }
    Ok(())
}

fn ppc(args: PpcArgs) -> Result<(), Failure> {
    let a = load(&args.input)?;
    let progs = a.ppc(&mut policy(&args.query)?)?;
    let manifest = (progs.len() > 1).then(|| chain_manifest(&progs));
    write_programs(&args.out, &progs.iter().collect::<Vec<_>>(), manifest.as_deref())
}

fn sbc(args: SbcArgs) -> Result<(), Failure> {
    if args.draws_per_rank == 0 {
        return Err(Failure::usage("--draws-per-rank must be at least 1"));
    }
    let a = load(&args.input)?;
    let cfg = args.mcmc.config()?;
    let mut data = load_data(args.data.as_deref(), &a)?;
    let mut pol = policy(&args.query)?;
    let (prior, predictive) = a.ppc_plans(&mut pol)?;
    let bundle = fwdppl::codegen::synthesize_sbc(&prior, &predictive, &a.program, args.draws_per_rank)
        .map_err(PipelineError::from)?;
    write_programs(
        &args.out,
        &bundle.programs().collect::<Vec<_>>(),
        Some(&bundle.manifest),
    )?;
    let (Some(reps), Some(seed)) = (args.reps, args.seed) else {
        return Ok(());
    };
    if args.bins == 0 || (bundle.draws_per_rank + 1) % args.bins != 0 {
        return Err(Failure::usage(format!(
            "--bins must divide the {} possible ranks",
            bundle.draws_per_rank + 1
        )));
    }
    for v in fwdppl::codegen::prior_predictive_plan(&prior, &predictive, &a.program)
        .renamed
        .keys()
    {
        data.remove(v);
    }
    let run = run_sbc(&bundle, &data, reps, seed, &cfg).map_err(Failure::runtime)?;
    let mut ranks = String::new();
    let cols: Vec<&String> = run.ranks.keys().collect();
    ranks.push_str(&cols.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(","));
    ranks.push('\n');
    for r in 0..reps {
        let row: Vec<String> = cols.iter().map(|c| run.ranks[*c][r].to_string()).collect();
        ranks.push_str(&row.join(","));
        ranks.push('\n');
    }
    let mut report = String::from("column      chi2      p  counts\n");
    for (c, u) in run.uniformity(args.bins) {
        let counts: Vec<String> = u.counts.iter().map(|n| n.to_string()).collect();
        report.push_str(&format!(
            "{c:<8} {:>8.3} {:>8.2e}  {}\n",
            u.chi_square,
            u.p_value,
            counts.join(" ")
        ));
    }
    write_file(&args.out.join("ranks.csv"), &ranks)?;
    write_file(&args.out.join("uniformity.txt"), &report)?;
    println!("ranks.csv\nuniformity.txt");
    Ok(())
}

fn report_warnings(run: &Run) {
    for w in run.warnings() {
        eprintln!("{w}");
    }
}

fn sample(args: SampleArgs, check: bool) -> Result<(), Failure> {
    let seed = args.seed.expect("required by the parser");
    let a = load(&args.common.input)?;
    let cfg = args.mcmc.config()?;
    let data = load_data(args.data.as_deref(), &a)?;
    let mut t = a.transform(args.mode, &mut policy(&args.query)?)?;
    note_assumptions(&args.query, &t);
    if let Some(f) = args.drop_factor {
        t.drop_factor(f).map_err(Failure::usage)?;
    }
    let plan = a.plan_for(&t)?;
    let start = Instant::now();
    let fwd = run_plan(&plan, &a.program, &data, args.draws, seed, &cfg).map_err(Failure::runtime)?;
    let fwd_time = start.elapsed();
    report_warnings(&fwd);
    if !check {
        return emit(
            args.common.out.as_deref(),
            &[Artifact {
                file: "draws.csv",
                text: fwd.table.to_csv_string(),
                shown: true,
            }],
        );
    }
    let start = Instant::now();
    let reference = reference_joint_sampler(
        &t.graph,
        &a.program,
        &a.deps,
        &data,
        args.draws,
        seed.wrapping_add(1),
        &cfg,
    )
    .map_err(Failure::runtime)?;
    let ref_time = start.elapsed();
    report_warnings(&reference);
    let report = equivalence_check(&fwd.table, &reference.table, &Tolerances::default()).map_err(Failure::runtime)?;
    eprintln!(
        "time: forward {:.3}s, reference {:.3}s",
        fwd_time.as_secs_f64(),
        ref_time.as_secs_f64()
    );
    emit(
        args.common.out.as_deref(),
        &[
            Artifact {
                file: "report.txt",
                text: format!("{report}\n"),
                shown: true,
            },
            Artifact {
                file: "draws.csv",
                text: fwd.table.to_csv_string(),
                shown: false,
            },
            Artifact {
                file: "reference.csv",
                text: reference.table.to_csv_string(),
                shown: false,
            },
        ],
    )
}
