//! `attnio` command line: generate problems, run and verify schedules, sweep
//! parameter grids.
//!
//! Exit codes: 0 success, 1 file I/O failure, 2 usage or overflow, 3 planning
//! failure (including entries too large), 4 simulation error, 5 verification
//! failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use attnio::attention::{approx_attention, exact_attention, exp_via_attention, plan_approx};
use attnio::iosim::IoStats;
use attnio::planner::{best_schedule, classify_case, cost_report, lower_bound, CostReport, Params};
use attnio::problem::gen_problem;
use attnio::schedules::{build, run_and_replay, ScheduleKind};
use attnio::{Error, ProblemInstance64};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

/// Largest number of rows a sweep may produce.
const MAX_SWEEP_ROWS: usize = 10_000;

#[derive(Parser)]
#[command(name = "attnio", version, about = "I/O simulation of tiled approximate attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded Q, K and V matrices as text files.
    Gen {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan, simulate and replay one schedule; prints a JSON report.
    Run(RunArgs),
    /// Run a grid of schedules and write one CSV row per applicable point.
    Sweep(SweepArgs),
    /// Compare approximate against exact attention on a seeded problem.
    Verify {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 1e-2)]
        eps: f64,
    },
    /// Recover exp(x) from a two-key attention.
    DemoExp {
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
    },
    /// Report the memory regime of (d, g, M).
    Classify {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        g: usize,
        #[arg(long = "M")]
        mem: u64,
    },
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Bound on |Q| and |K| entries.
    #[arg(long = "B", default_value_t = 0.5)]
    bound: f64,
    /// Bound on |V| entries.
    #[arg(long, default_value_t = 1.0)]
    vmax: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Fast memory capacity.
    #[arg(long = "M")]
    mem: u64,
    /// Polynomial degree; derived from B, vmax and eps when omitted.
    #[arg(long)]
    g: Option<usize>,
    /// Generating-set size for keylemma.
    #[arg(long)]
    w: Option<usize>,
    /// Schedule kind; the cheapest applicable approximate kind when omitted.
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    #[arg(long, default_value_t = 1e-2)]
    eps: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    g: Vec<usize>,
    #[arg(long = "M", value_delimiter = ',', required = true)]
    mem: Vec<u64>,
    /// Comma-separated schedule kinds; an empty string gives a header-only file.
    #[arg(long, default_value = "case1,keylemma,case3special,generic-square,generic-wide,flash,naive")]
    schedules: String,
    #[arg(long = "B", default_value_t = 0.5)]
    bound: f64,
    #[arg(long, default_value_t = 1.0)]
    vmax: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Plan(_) | Error::Precondition(_) | Error::EntriesTooLarge { .. } | Error::DegreeOverflow { .. } => 3,
            Error::Sim(_) => 4,
            Error::Positivity { .. } => 5,
            _ => 2,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(1, e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::new(1, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn print_json<T: Serialize>(value: &T) -> CmdResult {
    let text = serde_json::to_string(value).map_err(|e| Failure::new(1, e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn make_problem(a: &ProblemArgs) -> Result<ProblemInstance64, Error> {
    gen_problem(a.n, a.d, a.bound, a.vmax, a.seed)
}

fn cmd_gen(problem: &ProblemArgs, out: &PathBuf) -> CmdResult {
    let p = make_problem(problem)?;
    fs::create_dir_all(out)?;
    for (name, m) in [("q.txt", &p.q), ("k.txt", &p.k), ("v.txt", &p.v)] {
        fs::write(out.join(name), m.to_text())?;
    }
    print_json(&serde_json::json!({ "n": p.n, "d": p.d, "B": p.bound, "seed": p.seed, "out": out }))
}

#[derive(Serialize)]
struct RunReport {
    #[serde(flatten)]
    params: Params,
    #[serde(flatten)]
    report: CostReport,
    #[serde(flatten)]
    stats: IoStats,
    analytic: u64,
    replay_ok: bool,
}

fn cmd_run(a: &RunArgs) -> CmdResult {
    let pa = &a.problem;
    let g = match a.g {
        Some(g) => g,
        None => plan_approx(pa.d, pa.bound, pa.vmax, a.eps)?.poly.degree(),
    };
    let mut params = Params::new(pa.n, pa.d, g, a.mem)?;
    if let Some(w) = a.w {
        params = params.with_w(w);
    }
    let kind = match a.schedule {
        Some(k) => k,
        None => best_schedule(&params)?.0,
    };
    let report = cost_report(kind, &params)?;
    let plan = build(kind, &params)?;
    let (stats, replay_ok) = run_and_replay(&plan, &make_problem(pa)?)?;
    let consistent = replay_ok && stats.total_io == report.predicted_io;
    let analytic = report.predicted_io;
    print_json(&RunReport { params, report, stats, analytic, replay_ok })?;
    if consistent {
        Ok(())
    } else {
        Err(Failure::new(5, format!("{kind}: replay_ok={replay_ok}, simulated {} vs analytic {analytic}", stats.total_io)))
    }
}

#[derive(Debug, Serialize)]
struct SweepRow {
    n: usize,
    d: usize,
    g: usize,
    #[serde(rename = "M")]
    mem: u64,
    r: u128,
    schedule: ScheduleKind,
    case: String,
    loads: u64,
    stores: u64,
    total_io: u64,
    analytic: u64,
    lower_bound: f64,
    replay_ok: bool,
}

const SWEEP_HEADER: [&str; 13] =
    ["n", "d", "g", "M", "r", "schedule", "case", "loads", "stores", "total_io", "analytic", "lower_bound", "replay_ok"];

/// One grid point. `Ok(None)` when the schedule does not apply.
fn sweep_point(n: usize, d: usize, g: usize, mem: u64, kind: ScheduleKind, a: &SweepArgs) -> Result<Option<SweepRow>, Error> {
    let params = Params::new(n, d, g, mem)?;
    let plan = match build(kind, &params) {
        Ok(plan) => plan,
        Err(Error::Plan(_) | Error::Precondition(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let report = cost_report(kind, &params)?;
    let problem = gen_problem(n, d, a.bound, a.vmax, a.seed)?;
    let (stats, replay_ok) = run_and_replay(&plan, &problem)?;
    let case = classify_case(d, g, mem);
    Ok(Some(SweepRow {
        n,
        d,
        g,
        mem,
        r: params.r,
        schedule: kind,
        case: case.to_string(),
        loads: stats.loads,
        stores: stats.stores,
        total_io: stats.total_io,
        analytic: report.predicted_io,
        lower_bound: lower_bound(case, &params).value,
        replay_ok,
    }))
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ATTNIO_THREADS") {
        let threads: usize = v.parse().map_err(|_| Failure::new(2, format!("ATTNIO_THREADS must be a count, got {v:?}")))?;
        builder = builder.num_threads(threads.max(1));
    }
    builder.build().map_err(|e| Failure::new(1, e.to_string()))
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let kinds: Vec<ScheduleKind> = a
        .schedules
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e: Error| Failure::new(2, e.to_string())))
        .collect::<Result<_, _>>()?;
    let mut points = Vec::new();
    for &n in &a.n {
        for &d in &a.d {
            for &g in &a.g {
                for &mem in &a.mem {
                    points.extend(kinds.iter().map(|&k| (n, d, g, mem, k)));
                }
            }
        }
    }
    if points.len() > MAX_SWEEP_ROWS {
        return Err(Failure::new(2, format!("grid has {} points, limit {MAX_SWEEP_ROWS}", points.len())));
    }
    let rows: Vec<Option<SweepRow>> = thread_pool()?.install(|| {
        points.par_iter().map(|&(n, d, g, mem, k)| sweep_point(n, d, g, mem, k, a)).collect::<Result<_, _>>()
    })?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&a.out)?;
    w.write_record(SWEEP_HEADER)?;
    let mut bad = 0;
    for row in rows.iter().flatten() {
        bad += usize::from(!row.replay_ok || row.analytic != row.total_io);
        w.serialize(row)?;
    }
    w.flush()?;
    if bad > 0 {
        return Err(Failure::new(5, format!("{bad} rows failed replay or analytic equality")));
    }
    Ok(())
}

fn cmd_verify(problem: &ProblemArgs, eps: f64) -> CmdResult {
    let p = make_problem(problem)?;
    let approx = approx_attention(&p.q, &p.k, &p.v, eps)?;
    let exact = exact_attention(&p.q, &p.k, &p.v)?;
    let deviation = approx.output.max_abs_diff(&exact.output)?;
    let pass = deviation <= eps;
    print_json(&serde_json::json!({
        "n": p.n, "d": p.d, "B": p.bound, "eps": eps, "seed": p.seed,
        "max_deviation": deviation, "pass": pass,
    }))?;
    if pass {
        Ok(())
    } else {
        Err(Failure::new(5, format!("deviation {deviation} exceeds eps {eps}")))
    }
}

fn cmd_demo_exp(x: f64) -> CmdResult {
    let z = exp_via_attention(x)?;
    print_json(&serde_json::json!({ "x": x, "z": z, "deviation": (z - x.exp()).abs() }))
}

fn cmd_classify(d: usize, g: usize, mem: u64) -> CmdResult {
    let params = Params::new(1, d, g, mem)?;
    let w = attnio::planner::choose_w(g, mem, d).ok();
    print_json(&serde_json::json!({
        "d": d, "g": g, "M": mem, "r": params.r, "case": classify_case(d, g, mem), "w": w,
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen { problem, out } => cmd_gen(problem, out),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify { problem, eps } => cmd_verify(problem, *eps),
        Command::DemoExp { x } => cmd_demo_exp(*x),
        Command::Classify { d, g, mem } => cmd_classify(*d, *g, *mem),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
