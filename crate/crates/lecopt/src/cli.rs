//! Command-line entry point: `optimize`, `oracle`, `simulate`, and
//! `compare` subcommands over JSON catalog/query/environment files.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 oracle
//! refusal. Set `LEC_LOG={quiet|info|trace}` to control diagnostics.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Once;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::catalog::{load_catalog, load_environment, load_query, Catalog, Environment, QuerySpec};
use crate::error::{Error, Result};
use crate::optimizer::{
    optimize_lec_a, optimize_lec_b, optimize_lec_c_dynamic, optimize_lec_c_opts, optimize_lec_d,
    optimize_lsc, LecDOptions, Plan,
};
use crate::oracle::{oracle_best, OracleConfig};
use crate::simulator::{compare, simulate};

#[derive(Parser)]
#[command(
    name = "lecopt",
    about = "Join-order optimization under parameter uncertainty",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimize a query with one of the five algorithms.
    Optimize(OptimizeArgs),
    /// Brute-force best plan by exhaustive enumeration and exact expectation.
    Oracle(OracleArgs),
    /// Monte Carlo estimate of one plan's expected cost.
    Simulate(SimulateArgs),
    /// Paired Monte Carlo comparison of several plans.
    Compare(CompareArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Catalog JSON file.
    #[arg(long)]
    catalog: PathBuf,
    /// Query JSON file.
    #[arg(long)]
    query: PathBuf,
    /// Environment JSON file.
    #[arg(long)]
    env: PathBuf,
}

impl InputArgs {
    fn load(&self) -> Result<(Catalog, QuerySpec, Environment)> {
        Ok((
            load_catalog(&self.catalog)?,
            load_query(&self.query)?,
            load_environment(&self.env)?,
        ))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Lsc,
    LecA,
    LecB,
    LecC,
    LecD,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    algo: Algo,
    /// Plans kept per node (lec-b only).
    #[arg(long, default_value_t = 3)]
    c: usize,
    /// Result-size bucket budget for lec-d; 0 disables rebucketing.
    #[arg(long)]
    buckets: Option<usize>,
    /// Group memory representatives by formula breakpoints per node
    /// (lec-c only).
    #[arg(long)]
    auto_buckets: bool,
    /// Memory value for lsc; defaults to the environment mean.
    #[arg(long)]
    fixed_memory: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Relation-count refusal limit.
    #[arg(long, default_value_t = 7)]
    max_relations: usize,
    /// Joint-parameter-space refusal limit.
    #[arg(long, default_value_t = 2_000_000)]
    max_joint_space: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Plan JSON file.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Plan JSON files; repeat the flag for each plan.
    #[arg(long, required = true)]
    plan: Vec<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

fn init_logging() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        let level = match std::env::var("LEC_LOG").as_deref() {
            Ok("info") => log::LevelFilter::Info,
            Ok("trace") => log::LevelFilter::Trace,
            _ => log::LevelFilter::Off,
        };
        let _ = env_logger::Builder::new().filter_level(level).try_init();
    });
}

fn load_plan(path: &PathBuf) -> Result<Plan> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

fn print_plan(out: &mut impl Write, plan: &Plan, json: bool) -> std::io::Result<()> {
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(plan).expect("plan serializes"))
    } else {
        write!(out, "{}", plan.render_tree())?;
        let phases: Vec<String> = plan.per_phase_costs.iter().map(|c| c.to_string()).collect();
        writeln!(out, "per-phase costs: [{}]", phases.join(", "))
    }
}

fn run_optimize(args: &OptimizeArgs, out: &mut impl Write) -> Result<()> {
    let (catalog, query, env) = args.input.load()?;
    let plan = match args.algo {
        Algo::Lsc => {
            let m = args.fixed_memory.unwrap_or_else(|| env.memory.expectation());
            info!("lsc at fixed memory {m}");
            optimize_lsc(&catalog, &query, m)?
        }
        Algo::LecA => optimize_lec_a(&catalog, &query, &env)?,
        Algo::LecB => optimize_lec_b(&catalog, &query, &env, args.c)?,
        Algo::LecC => {
            if env.transition.is_some() {
                optimize_lec_c_dynamic(&catalog, &query, &env)?
            } else {
                optimize_lec_c_opts(&catalog, &query, &env, args.auto_buckets)?
            }
        }
        Algo::LecD => {
            let opts = LecDOptions {
                rebucket_budget: match args.buckets {
                    Some(0) => None,
                    Some(k) => Some(k),
                    None => LecDOptions::default().rebucket_budget,
                },
                cube_root_inputs: false,
            };
            optimize_lec_d(&catalog, &query, &env, &opts)?
        }
    };
    print_plan(out, &plan, args.json).map_err(io_out)?;
    Ok(())
}

fn run_oracle(args: &OracleArgs, out: &mut impl Write) -> Result<()> {
    let (catalog, query, env) = args.input.load()?;
    let cfg = OracleConfig {
        max_relations: args.max_relations,
        max_joint_space: args.max_joint_space,
    };
    let result = oracle_best(&catalog, &query, &env, &cfg)?;
    if args.json {
        writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "best": result.best,
                "ranked": result.ranked,
            }))
            .expect("plans serialize")
        )
        .map_err(io_out)?;
        return Ok(());
    }
    print_plan(out, &result.best, false).map_err(io_out)?;
    if query.relations.len() <= 4 {
        writeln!(out, "all plans, ranked:").map_err(io_out)?;
        for (i, p) in result.ranked.iter().enumerate() {
            let methods: Vec<&str> = p.methods.iter().map(|m| m.name()).collect();
            writeln!(
                out,
                "{:>3}. cost={} order={} methods=[{}] sort={}",
                i + 1,
                p.expected_cost,
                p.order.join(","),
                methods.join(","),
                if p.final_sort { "yes" } else { "no" },
            )
            .map_err(io_out)?;
        }
    }
    Ok(())
}

fn run_simulate(args: &SimulateArgs, out: &mut impl Write) -> Result<()> {
    let (catalog, query, env) = args.input.load()?;
    let plan = load_plan(&args.plan)?;
    let report = simulate(&catalog, &query, &env, &plan, args.trials, args.seed)?;
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))
            .map_err(io_out)?;
    } else {
        writeln!(
            out,
            "trials={} mean={} std_error={} rng={}",
            report.trials, report.mean, report.std_error, report.rng
        )
        .map_err(io_out)?;
    }
    Ok(())
}

fn run_compare(args: &CompareArgs, out: &mut impl Write) -> Result<()> {
    let (catalog, query, env) = args.input.load()?;
    let plans: Vec<Plan> = args.plan.iter().map(load_plan).collect::<Result<_>>()?;
    let report = compare(&catalog, &query, &env, &plans, args.trials, args.seed)?;
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))
            .map_err(io_out)?;
        return Ok(());
    }
    writeln!(out, "trials={} rng={}", report.trials, report.rng).map_err(io_out)?;
    for stats in report.per_plan.as_deref().unwrap_or(&[]) {
        writeln!(
            out,
            "plan #{} ({}): mean={} std_error={}",
            stats.plan,
            args.plan[stats.plan].display(),
            stats.mean,
            stats.std_error
        )
        .map_err(io_out)?;
    }
    Ok(())
}

fn io_out(source: std::io::Error) -> Error {
    Error::Io { path: "<output>".into(), source }
}

/// Parse and execute; returns the process exit code. Output goes to
/// `out`, diagnostics to `err`.
pub fn run<I, T>(argv: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outcomes.
            return if e.use_stderr() {
                let _ = writeln!(err, "{e}");
                1
            } else {
                let _ = write!(out, "{e}");
                0
            };
        }
    };
    let result = match &cli.cmd {
        Cmd::Optimize(args) => run_optimize(args, out),
        Cmd::Oracle(args) => run_oracle(args, out),
        Cmd::Simulate(args) => run_simulate(args, out),
        Cmd::Compare(args) => run_compare(args, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
