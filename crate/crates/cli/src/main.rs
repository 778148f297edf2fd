mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qcbb::blp::{brute_force_optimum, generate_spp, load_instance, save_instance, SppParams};
use qcbb::engine::{run_plain_qaoa, solve, ClockMode, SolveStatus};
use qcbb::metrics::{export_trace, import_trace, primal_dual_integral, Axis, BoundSeries, TraceFormat};
use serde::Serialize;

use config::{FileConfig, FlagConfig};

/// Largest instance `gen --with-optimum` will enumerate.
const GEN_OPTIMUM_LIMIT: usize = 16;

#[derive(Parser)]
#[command(name = "qcbb", version, about = "Quantum-classical branch and bound for binary linear programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random set-partitioning instances.
    Gen(GenArgs),
    /// Solve an instance with branch and bound.
    Solve(SolveArgs),
    /// Run plain QAOA on the whole instance.
    Baseline(BaselineArgs),
    /// Turn traces into plot-ready series.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    cost_low: i64,
    #[arg(long, default_value_t = 100)]
    cost_high: i64,
    /// Store the brute-force optimum in each file (n <= 16).
    #[arg(long)]
    with_optimum: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Wall,
    Logical,
}

impl From<ClockArg> for ClockMode {
    fn from(c: ClockArg) -> Self {
        match c {
            ClockArg::Wall => ClockMode::Wall,
            ClockArg::Logical => ClockMode::Logical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct CommonArgs {
    /// Instance JSON; may also come from the config file.
    instance: Option<PathBuf>,
    /// JSON file with default values for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    shots: Option<u64>,
    /// Seed; falls back to the config file, then QCBB_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Trace format; guessed from the extension by default.
    #[arg(long, value_enum)]
    trace_format: Option<FormatArg>,
    /// Time axis of the trace.
    #[arg(long, value_enum)]
    clock: Option<ClockArg>,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Optimizer queries per node.
    #[arg(long)]
    node_queries: Option<usize>,
    #[arg(long)]
    node_limit: Option<usize>,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Relative gap target.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    warm_start: bool,
    /// Nodes evaluated in parallel; traces are not reproducible above 1.
    #[arg(long)]
    workers: Option<usize>,
    /// Explore the whole tree instead of pruning by bound.
    #[arg(long)]
    no_bound_pruning: bool,
    /// Sample nodes even when their bound already prunes them.
    #[arg(long)]
    vqa_on_pruned_nodes: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Optimizer query budget.
    #[arg(long)]
    queries: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trace of a branch-and-bound run (or any single trace).
    trace: PathBuf,
    /// Baseline trace to merge into a comparison.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Instance, to attach optimum and worst feasible cost (n <= 20).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn trace_format(path: &Path, arg: Option<FormatArg>) -> TraceFormat {
    match arg {
        Some(FormatArg::Csv) => TraceFormat::Csv,
        Some(FormatArg::Json) => TraceFormat::Json,
        None => TraceFormat::from_path(path),
    }
}

fn bitstring(x: &[u8]) -> String {
    x.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

fn load_file_config(common: &CommonArgs) -> Result<FileConfig> {
    match &common.config {
        Some(path) => FileConfig::load(path),
        None => Ok(FileConfig::default()),
    }
}

fn instance_path(common: &CommonArgs, file: &FileConfig) -> Result<PathBuf> {
    match (&common.instance, &file.instance) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(p)) => Ok(PathBuf::from(p)),
        (None, None) => bail!("no instance given"),
    }
}

fn trace_path(common: &CommonArgs, file: &FileConfig) -> Option<PathBuf> {
    common.trace.clone().or_else(|| file.trace.as_ref().map(PathBuf::from))
}

fn cmd_gen(args: &GenArgs) -> Result<ExitCode> {
    let params = SppParams {
        n: args.n,
        m: args.m,
        cost_low: args.cost_low,
        cost_high: args.cost_high,
    };
    if args.with_optimum && args.n > GEN_OPTIMUM_LIMIT {
        bail!("--with-optimum needs n <= {GEN_OPTIMUM_LIMIT}, got {}", args.n);
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for k in 0..args.count {
        let seed = args.seed + k;
        let mut inst = generate_spp(params, seed)?;
        let path = args
            .out
            .join(format!("{}.json", inst.name.clone().unwrap_or_default()));
        if args.with_optimum {
            inst.optimum = brute_force_optimum(&inst)?.value();
        }
        save_instance(&inst, &path)?;
        match inst.optimum {
            Some(opt) => println!("{} optimum {opt}", path.display()),
            None => println!("{}", path.display()),
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SolveSummary {
    status: SolveStatus,
    best_value: Option<f64>,
    assignment: Option<String>,
    best_penalized: Option<f64>,
    global_lb: Option<f64>,
    nodes_evaluated: usize,
    total_queries: usize,
    pd_integral_nodes: Option<f64>,
    pd_integral_seconds: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    let file = load_file_config(&args.common)?;
    let flags = FlagConfig {
        p: args.common.p,
        shots: args.common.shots,
        node_queries: args.node_queries,
        node_limit: args.node_limit,
        time_limit: args.time_limit,
        gap: args.gap,
        seed: args.common.seed,
        warm_start: args.warm_start,
        workers: args.workers,
        clock: args.common.clock.map(Into::into),
        no_bound_pruning: args.no_bound_pruning,
        vqa_on_pruned_nodes: args.vqa_on_pruned_nodes,
    };
    let env_seed = std::env::var("QCBB_SEED").ok();
    let cfg = config::merge(&flags, &file, env_seed.as_deref())?;
    let path = instance_path(&args.common, &file)?;
    let inst = load_instance(&path).with_context(|| format!("loading {}", path.display()))?;
    let result = solve(&inst, &cfg)?;

    if let Some(trace) = trace_path(&args.common, &file) {
        export_trace(&result.trace, &trace, trace_format(&trace, args.common.trace_format))
            .with_context(|| format!("writing trace {}", trace.display()))?;
    }
    let integral = |axis| {
        let series = BoundSeries::from_trace(&result.trace, axis);
        primal_dual_integral(&series).ok()
    };
    let summary = SolveSummary {
        status: result.status,
        best_value: result.best_feasible.as_ref().map(|s| s.value),
        assignment: result.best_feasible.as_ref().map(|s| bitstring(&s.x)),
        best_penalized: result.best_penalized.as_ref().map(|s| s.value),
        global_lb: result.global_lb,
        nodes_evaluated: result.nodes_evaluated,
        total_queries: result.total_queries,
        pd_integral_nodes: integral(Axis::Nodes),
        pd_integral_seconds: integral(Axis::Seconds),
    };
    if args.common.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!("{} {}", summary.status, fmt_opt(summary.best_value));
        println!("assignment {}", summary.assignment.as_deref().unwrap_or("-"));
        println!("best_penalized {}", fmt_opt(summary.best_penalized));
        println!("global_lb {}", fmt_opt(summary.global_lb));
        println!("nodes {}", summary.nodes_evaluated);
        println!("queries {}", summary.total_queries);
        println!("pd_integral_nodes {}", fmt_opt(summary.pd_integral_nodes));
        println!("pd_integral_seconds {}", fmt_opt(summary.pd_integral_seconds));
    }
    Ok(match result.status {
        SolveStatus::Optimal | SolveStatus::GapReached => ExitCode::SUCCESS,
        SolveStatus::Infeasible => ExitCode::from(2),
        SolveStatus::NodeLimit | SolveStatus::TimeLimit => ExitCode::from(3),
    })
}

#[derive(Serialize)]
struct BaselineSummary {
    best_penalized: f64,
    assignment: String,
    feasible: bool,
    best_feasible: Option<f64>,
    queries: usize,
    best_expectation: Option<f64>,
}

fn cmd_baseline(args: &BaselineArgs) -> Result<ExitCode> {
    let file = load_file_config(&args.common)?;
    let flags = FlagConfig {
        p: args.common.p,
        shots: args.common.shots,
        seed: args.common.seed,
        clock: args.common.clock.map(Into::into),
        ..FlagConfig::default()
    };
    let env_seed = std::env::var("QCBB_SEED").ok();
    let cfg = config::merge(&flags, &file, env_seed.as_deref())?;
    let queries = args.queries.or(file.queries).unwrap_or(500);
    if queries == 0 {
        bail!("--queries must be positive");
    }
    let path = instance_path(&args.common, &file)?;
    let inst = load_instance(&path).with_context(|| format!("loading {}", path.display()))?;
    let result = run_plain_qaoa(&inst, &cfg, queries)?;

    if let Some(trace) = trace_path(&args.common, &file) {
        export_trace(&result.trace, &trace, trace_format(&trace, args.common.trace_format))
            .with_context(|| format!("writing trace {}", trace.display()))?;
    }
    let summary = BaselineSummary {
        best_penalized: result.best_penalized.value,
        assignment: bitstring(&result.best_penalized.x),
        feasible: inst.is_feasible(&result.best_penalized.x)?,
        best_feasible: result.best_feasible.as_ref().map(|s| s.value),
        queries: result.optimizer.total_queries(),
        best_expectation: result
            .trace
            .iter()
            .filter_map(|e| e.expectation)
            .reduce(f64::min),
    };
    if args.common.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!("best_penalized {}", summary.best_penalized);
        println!("assignment {}", summary.assignment);
        println!("feasible {}", summary.feasible);
        println!("best_feasible {}", fmt_opt(summary.best_feasible));
        println!("queries {}", summary.queries);
        println!("best_expectation {}", fmt_opt(summary.best_expectation));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(args: &ReportArgs) -> Result<ExitCode> {
    let read = |path: &Path| {
        import_trace(path, TraceFormat::from_path(path))
            .with_context(|| format!("reading trace {}", path.display()))
    };
    let mut main = report::build("qcbb", &read(&args.trace)?)?;
    if let Some(path) = &args.instance {
        let inst = load_instance(path).with_context(|| format!("loading {}", path.display()))?;
        let bf = brute_force_optimum(&inst)?;
        main.worst_feasible = bf.worst_feasible;
        main.optimum = bf.value();
    }
    let text = match &args.baseline {
        Some(path) => {
            let baseline = report::build("baseline", &read(path)?)?;
            serde_json::to_string_pretty(&report::Comparison {
                qcbb: main,
                baseline,
            })?
        }
        None => serde_json::to_string_pretty(&main)?,
    };
    match &args.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::init();
    // usage errors exit 1; 2 is reserved for infeasible instances
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
