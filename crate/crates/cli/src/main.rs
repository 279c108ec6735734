use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use touchloc::bench::oracle::{oracle_optimal, ratio_f64, DEFAULT_ORACLE_CAP};
use touchloc::bench::{
    generate_nested_scenarios, run_benchmark, BenchOptions, Method, NestedLevel,
};
use touchloc::codec::{policy_from_json, policy_to_json};
use touchloc::experience::{precompute_values, rollout_experience, ExperienceHeuristic};
use touchloc::policy::{execute, ExecutionTrace, DEFAULT_DEPTH_CAP};
use touchloc::preprocess::{
    build_database, select_experience, write_stats_csv, BuildMode, BuildOptions, PolicyDatabase,
    ProblemFamily,
};
use touchloc::scenario::{Scenario, ScenarioConfig};
use touchloc::solver::{
    extract_history_policy, inflate, solve, BaseHeuristic, Problem, SolverParams,
};
use touchloc::tbl::{evaluate_tbl, run_tbl, TblParams};
use touchloc::world::Hypothesis;

#[derive(Parser)]
#[command(
    name = "touchloc",
    version,
    about = "Plan touch-based object localization on grid worlds"
)]
struct Cli {
    /// Seed for every randomized choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Build a policy database over every uncertainty set of a scenario.
    Preprocess(PreprocessArgs),
    /// Solve one uncertainty set and print the solver statistics.
    Solve(SolveArgs),
    /// Run a stored policy against a groundtruth pose.
    Execute(ExecuteArgs),
    /// Run or evaluate the information-gain baseline.
    Tbl(TblArgs),
    /// Exact optimal expected cost of each uncertainty set.
    Oracle(OracleArgs),
    /// Compare methods over every uncertainty set of a scenario.
    Bench(BenchArgs),
    /// Write a scenario with nested uncertainty boxes around a nominal pose.
    GenScenarios(GenArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    epsilon: f64,
    #[arg(long, default_value = "experience")]
    mode: BuildMode,
    /// Per-problem statistics CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Fill the oracle_cost column (exact solve per set).
    #[arg(long)]
    oracle: bool,
    /// Record wall times in the statistics.
    #[arg(long)]
    wall_time: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Scenario id or index of the uncertainty set.
    #[arg(long)]
    set: String,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Policy database to draw experience from.
    #[arg(long)]
    experience: Option<PathBuf>,
    /// Where to write the extracted policy.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    backup_budget: Option<u64>,
}

#[derive(Args)]
struct ExecuteArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    /// Pose as `x,y,rot`; defaults to the scenario's groundtruth.
    #[arg(long)]
    groundtruth: Option<Hypothesis>,
}

#[derive(Args)]
struct TblArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    set: String,
    /// Run once against this pose instead of averaging over the set.
    #[arg(long)]
    groundtruth: Option<Hypothesis>,
    /// Per-groundtruth cost CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Restrict to one set; all sets when omitted.
    #[arg(long)]
    set: Option<String>,
    #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
    cap: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated methods: rtdp:<eps>, ertdp:<eps>, ertdp-naive:<eps>,
    /// ertdp-random:<eps>, tbl.
    #[arg(long, value_delimiter = ',', default_value = "rtdp:1,ertdp:2")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
    oracle_cap: usize,
    #[arg(long)]
    wall_time: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Scenario whose world, object, start and actions are reused.
    #[arg(long)]
    base: PathBuf,
    /// Nominal pose `x,y,rot`.
    #[arg(long)]
    nominal: Hypothesis,
    /// Comma-separated half-widths, each `E` (x only) or `EXxEY`.
    #[arg(long, value_delimiter = ',', required = true)]
    extents: Vec<String>,
    /// Quarter turns per level, counted from the nominal rotation.
    #[arg(long, default_value_t = 1)]
    rotations: u32,
    /// Name of the generated scenario; ids become `<name>-NNN`.
    #[arg(long)]
    name: Option<String>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::from_path(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn table(format: Format, header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            Ok(String::from_utf8(w.into_inner()?)?)
        }
        Format::Json => {
            let objects: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|r| {
                    header
                        .iter()
                        .map(|h| h.to_string())
                        .zip(r.iter().map(|v| json!(v)))
                        .collect()
                })
                .collect();
            Ok(serde_json::to_string_pretty(&objects)? + "\n")
        }
    }
}

fn trace_rows(trace: &ExecutionTrace) -> Vec<Vec<String>> {
    trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                i.to_string(),
                s.belief.robot.to_string(),
                s.action.encode(),
                s.outcome.r_next.to_string(),
                u8::from(s.outcome.contact).to_string(),
                s.outcome.cost.to_string(),
                s.belief.hypotheses.len().to_string(),
            ]
        })
        .collect()
}

const TRACE_HEADER: [&str; 7] = ["step", "robot", "action", "next", "contact", "cost", "|H|"];

fn preprocess(cli: &Cli, args: &PreprocessArgs) -> Result<()> {
    let scenario = load(&args.scenario)?;
    let family = ProblemFamily::from(scenario);
    let mut opts = BuildOptions::new(args.epsilon, args.mode);
    opts.params.seed = cli.seed;
    if args.oracle {
        opts.oracle_cap = Some(DEFAULT_ORACLE_CAP);
    }
    let build = build_database(&family, &opts)?;
    if let Some(path) = &args.stats {
        let file =
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_stats_csv(&build.rows, args.wall_time, file)?;
    }
    for r in build.rows.iter().filter(|r| !r.success) {
        eprintln!(
            "{}: {}",
            r.scenario_id,
            r.error.as_deref().unwrap_or("policy does not localize")
        );
    }
    emit(cli.out.as_deref(), &build.database.to_json())
}

fn solve_cmd(cli: &Cli, args: &SolveArgs) -> Result<()> {
    let scenario = load(&args.scenario)?;
    let (id, hs) = scenario
        .sets
        .iter()
        .find(|(id, _)| *id == args.set)
        .or_else(|| {
            args.set
                .parse::<usize>()
                .ok()
                .and_then(|i| scenario.sets.get(i))
        })
        .with_context(|| format!("no uncertainty set `{}`", args.set))?;
    let scene = &scenario.scene;
    let start = scenario.start_belief(hs);
    let problem = Problem::new(scene, start.clone());
    let mut params = SolverParams {
        epsilon: args.epsilon,
        seed: cli.seed,
        ..SolverParams::default()
    };
    if let Some(b) = args.backup_budget {
        params.backup_budget = b;
    }
    params.validate()?;
    let clock = Instant::now();
    let db = match &args.experience {
        Some(path) => Some(PolicyDatabase::from_json(&fs::read_to_string(path)?)?),
        None => None,
    };
    let prior = db.as_ref().and_then(|db| select_experience(db, hs));
    let solution = match prior {
        Some(prior) => {
            let mut exp = rollout_experience(scene, prior, &start);
            precompute_values(scene, &mut exp, args.epsilon)?;
            solve(
                &problem,
                &ExperienceHeuristic {
                    scene,
                    experience: &exp,
                },
                &params,
            )?
        }
        None => solve(
            &problem,
            &inflate(BaseHeuristic { scene }, args.epsilon)?,
            &params,
        )?,
    };
    let solver = if prior.is_some() {
        "e-rtdp-bel"
    } else {
        "rtdp-bel"
    };
    if let Some(path) = &args.policy {
        let mut policy = extract_history_policy(&problem, &solution.table, DEFAULT_DEPTH_CAP)?;
        policy.scenario_id = id.clone();
        policy.epsilon = args.epsilon;
        policy.solver = solver.to_string();
        policy.stats = (&solution.stats).into();
        fs::write(path, policy_to_json(&policy))?;
    }
    let stats = &solution.stats;
    let record = json!({
        "scenario_id": id,
        "solver": solver,
        "epsilon": args.epsilon,
        "backups": stats.backups,
        "rollouts": stats.rollouts,
        "wall_time_s": clock.elapsed().as_secs_f64(),
        "converged": stats.converged,
        "v_start": stats.v_start,
    });
    emit(
        cli.out.as_deref(),
        &(serde_json::to_string_pretty(&record)? + "\n"),
    )
}

fn execute_cmd(cli: &Cli, args: &ExecuteArgs) -> Result<()> {
    let scenario = load(&args.scenario)?;
    let policy = policy_from_json(&fs::read_to_string(&args.policy)?)?;
    let Some(groundtruth) = args.groundtruth.or(scenario.groundtruth) else {
        bail!("no groundtruth given and the scenario has none");
    };
    let trace = execute(&scenario.scene, &policy, groundtruth, DEFAULT_DEPTH_CAP)?;
    if !trace.localized {
        eprintln!(
            "policy stopped at {} without localizing",
            trace.final_belief
        );
    }
    let text = match cli.format {
        Format::Csv => table(Format::Csv, &TRACE_HEADER, &trace_rows(&trace))?,
        Format::Json => {
            serde_json::to_string_pretty(&json!({
                "groundtruth": groundtruth.to_string(),
                "total_cost": trace.total_cost,
                "steps": trace.steps.len(),
                "localized": trace.localized,
                "final_belief": trace.final_belief.encode(),
            }))? + "\n"
        }
    };
    emit(cli.out.as_deref(), &text)
}

fn tbl_cmd(cli: &Cli, args: &TblArgs) -> Result<()> {
    let scenario = load(&args.scenario)?;
    let (id, hs) = scenario
        .sets
        .iter()
        .find(|(id, _)| *id == args.set)
        .or_else(|| {
            args.set
                .parse::<usize>()
                .ok()
                .and_then(|i| scenario.sets.get(i))
        })
        .with_context(|| format!("no uncertainty set `{}`", args.set))?;
    let scene = &scenario.scene;
    let start = scenario.start_belief(hs);
    let params = TblParams::for_scene(scene);
    let truths: Vec<Hypothesis> = match args.groundtruth {
        Some(h) => vec![h],
        None => hs.iter().copied().collect(),
    };
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for &h in &truths {
        let trace = run_tbl(scene, &start, h, &params)?;
        rows.push(vec![
            id.clone(),
            hs.len().to_string(),
            h.to_string(),
            trace.total_cost.to_string(),
            trace.steps.len().to_string(),
            trace.localized.to_string(),
        ]);
        traces.push(trace);
    }
    if let Some(path) = &args.stats {
        let header = [
            "scenario_id",
            "|H|",
            "groundtruth",
            "cost",
            "steps",
            "localized",
        ];
        fs::write(path, table(Format::Csv, &header, &rows)?)?;
    }
    let text = if args.groundtruth.is_some() {
        table(cli.format, &TRACE_HEADER, &trace_rows(&traces[0]))?
    } else {
        let eval = evaluate_tbl(scene, &start, &params)?;
        let header = ["scenario_id", "|H|", "method", "expected_cost", "success"];
        let row = vec![
            id.clone(),
            hs.len().to_string(),
            "tbl".to_string(),
            format!("{:.12}", ratio_f64(eval.expected_cost)),
            eval.success.to_string(),
        ];
        table(cli.format, &header, &[row])?
    };
    emit(cli.out.as_deref(), &text)
}

fn oracle_cmd(cli: &Cli, args: &OracleArgs) -> Result<()> {
    let scenario = load(&args.scenario)?;
    let sets: Vec<_> = match &args.set {
        Some(s) => {
            let hs = scenario.set(s)?;
            scenario.sets.iter().filter(|(_, h)| h == hs).collect()
        }
        None => scenario.sets.iter().collect(),
    };
    let mut rows = Vec::new();
    for (id, hs) in sets {
        let o = oracle_optimal(&scenario.scene, &scenario.start_belief(hs), args.cap)
            .with_context(|| format!("oracle for {id}"))?;
        rows.push(vec![
            id.clone(),
            hs.len().to_string(),
            o.value.to_string(),
            format!("{:.12}", o.value_f64()),
            o.belief_count().to_string(),
        ]);
    }
    let header = [
        "scenario_id",
        "|H|",
        "oracle_cost_exact",
        "oracle_cost",
        "beliefs",
    ];
    emit(cli.out.as_deref(), &table(cli.format, &header, &rows)?)
}

fn bench_cmd(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let scenario = load(&args.scenario)?;
    let mut opts = BenchOptions::new(args.methods.clone());
    opts.params.seed = cli.seed;
    opts.oracle_cap = args.oracle_cap;
    opts.wall_time = args.wall_time;
    let report = run_benchmark(&scenario, &opts)?;
    let text = match cli.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json() + "\n",
    };
    emit(cli.out.as_deref(), &text)
}

fn parse_extent(s: &str) -> Result<(u32, u32)> {
    let parsed = match s.split_once('x') {
        Some((a, b)) => a.trim().parse().ok().zip(b.trim().parse().ok()),
        None => s.trim().parse().ok().map(|a| (a, 0)),
    };
    parsed.with_context(|| format!("bad extent `{s}`, expected E or EXxEY"))
}

fn gen_cmd(cli: &Cli, args: &GenArgs) -> Result<()> {
    let text = fs::read_to_string(&args.base)?;
    let mut base: ScenarioConfig = serde_json::from_str(&text).context("parsing base scenario")?;
    if let Some(name) = &args.name {
        base.name = Some(name.clone());
    }
    let levels = args
        .extents
        .iter()
        .map(|e| parse_extent(e).map(|(ex, ey)| NestedLevel::half_width(ex, ey, args.rotations)))
        .collect::<Result<Vec<_>>>()?;
    let scenario = generate_nested_scenarios(&base, args.nominal, &levels)?;
    emit(cli.out.as_deref(), &(scenario.to_json() + "\n"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Preprocess(a) => preprocess(cli, a),
        Command::Solve(a) => solve_cmd(cli, a),
        Command::Execute(a) => execute_cmd(cli, a),
        Command::Tbl(a) => tbl_cmd(cli, a),
        Command::Oracle(a) => oracle_cmd(cli, a),
        Command::Bench(a) => bench_cmd(cli, a),
        Command::GenScenarios(a) => gen_cmd(cli, a),
    }
}
