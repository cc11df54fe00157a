//! Command-line driver for the cascade runtime.
//!
//! Three subcommands:
//!
//! * `run` — factor a randomly generated SPD matrix through a flow-graph
//!   configuration, optionally verifying the result and recording a trace.
//! * `trace-check` — validate a recorded trace file against the runtime's
//!   ordering and transfer contracts.
//! * `bench` — repeat a run and report the fastest wall time.
//!
//! Exit codes: 0 success, 1 internal failure (deadlock, i/o), 2 verification
//! failure, 3 numerical failure, 4 configuration/usage problems (including
//! malformed trace files), 5 trace contract violations.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use cascade_core::{
    checker, cholesky, create_data, parse_config, preset, relative_residual,
    trace::{read_trace, write_trace, TraceEvent},
    DataHandle, Dispatcher, DispatcherOptions, Error, ExecKind, FlowGraph, TaskArg,
    RESIDUAL_TOLERANCE,
};

const CSV_HEADER: &str = "config,n,b1,b2,workers,ranks,wall_ms,leaf_tasks,messages,residual";

const EXIT_INTERNAL: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CONFIG: u8 = 4;
const EXIT_TRACE: u8 = 5;

#[derive(Parser)]
#[command(name = "cascade", version, about = "Task-parallel runtime driver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Factor a random SPD matrix through a flow-graph configuration.
    Run(RunArgs),
    /// Validate a recorded trace file.
    TraceCheck {
        /// Trace file produced by `run --trace`.
        file: PathBuf,
    },
    /// Repeat a run and report the fastest wall time.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Operation to submit for the whole matrix.
    #[arg(long, default_value = "potrf")]
    op: String,

    /// Matrix dimension (the matrix is n x n).
    #[arg(long, default_value_t = 512)]
    n: usize,

    /// First-level partition grid: b1 x b1 blocks.
    #[arg(long, default_value_t = 4)]
    b1: usize,

    /// Second-level partition grid within each block: b2 x b2.
    #[arg(long, default_value_t = 2)]
    b2: usize,

    /// Preset name (G1, G2, G3) or path to a flow-graph config file.
    #[arg(long, default_value = "G1")]
    config: String,

    /// Override the worker count of the threaded node.
    #[arg(long)]
    threads: Option<usize>,

    /// Override the rank count of the distsim node.
    #[arg(long)]
    ranks: Option<usize>,

    /// Seed for the generated matrix.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Check the factorization against the original matrix.
    #[arg(long)]
    verify: bool,

    /// Record the execution trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Append the result row to this CSV file (header added when new).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Flip the sign of the diagonal entry at row n/2 to force a
    /// numerical failure mid-factorization.
    #[arg(long)]
    negate_diagonal: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Number of repetitions; the fastest wall time is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run(args) => run(&args, None),
        Cmd::TraceCheck { file } => trace_check(&file),
        Cmd::Bench(args) => bench(&args),
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Numerical { .. } => EXIT_NUMERICAL,
        Error::Config(_) | Error::Parse(_) | Error::Usage(_) | Error::UnknownOp(_) => EXIT_CONFIG,
        Error::DeadlockTimeout { .. } | Error::Io(_) => EXIT_INTERNAL,
    }
}

/// Loads a preset or config file and applies `--threads` / `--ranks`
/// overrides.
fn load_graph(args: &RunArgs) -> Result<FlowGraph, Error> {
    let mut graph = match args.config.as_str() {
        "G1" | "G2" | "G3" => preset(&args.config)?,
        path => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config file {path:?}: {e}"))
            })?;
            parse_config(&text)?
        }
    };
    for node in &mut graph.nodes {
        match node.kind {
            ExecKind::Threaded => {
                if let Some(t) = args.threads {
                    node.workers = Some(t);
                }
            }
            ExecKind::Distsim => {
                if let Some(r) = args.ranks {
                    node.ranks = Some(r);
                    node.grid = None; // the default grid for the new count
                }
            }
            ExecKind::Kernel => {}
        }
    }
    graph.validate()?;
    Ok(graph)
}

fn build_matrix(args: &RunArgs) -> Result<DataHandle, Error> {
    let spec = [(args.b1, args.b1), (args.b2, args.b2)];
    let a = create_data(args.n, args.n, &spec)?;
    a.fill_spd(args.seed)?;
    if args.negate_diagonal {
        let mut m = a.read_region();
        let k = args.n / 2;
        m[k * args.n + k] = -m[k * args.n + k];
        a.write_region(&m)?;
    }
    Ok(a)
}

struct RunOutcome {
    wall_ms: f64,
    leaf_tasks: u64,
    messages: u64,
    workers: usize,
    ranks: usize,
    residual: Option<f64>,
}

/// One full run: build, execute, optionally verify. Returns the outcome or
/// the error to map to an exit code (with any trace already written).
fn execute(args: &RunArgs) -> Result<RunOutcome, Error> {
    let graph = load_graph(args)?;
    let a = build_matrix(args)?;
    let original = args.verify.then(|| a.read_region());

    let options = DispatcherOptions {
        trace: args.trace.is_some(),
        ..DispatcherOptions::default()
    };
    let d = Dispatcher::configure_with(&graph, cholesky::operations(), options)?;
    let t0 = Instant::now();
    let submitted = d
        .submit(&args.op, vec![TaskArg::read_write(a.clone())])
        .map(|_| ())
        .and_then(|()| d.wait_all());
    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    let trace = d.take_trace();
    let stats = d.stats();
    let (workers, ranks) = (d.workers(), d.ranks());
    drop(d);

    if let Some(path) = &args.trace {
        if let Some(events) = &trace {
            write_trace_file(path, events)?;
        }
    }
    submitted?;

    let residual = original.map(|orig| relative_residual(&orig, &a.read_region(), args.n));
    Ok(RunOutcome {
        wall_ms,
        leaf_tasks: stats.leaf_tasks,
        messages: stats.messages,
        workers,
        ranks,
        residual,
    })
}

fn write_trace_file(path: &Path, events: &[TraceEvent]) -> Result<(), Error> {
    let mut f = fs::File::create(path)?;
    write_trace(events, &mut f)?;
    Ok(())
}

fn csv_row(args: &RunArgs, o: &RunOutcome) -> String {
    let residual = match o.residual {
        Some(r) => format!("{r:.3e}"),
        None => "-".to_string(),
    };
    format!(
        "{},{},{},{},{},{},{:.3},{},{},{}",
        args.config,
        args.n,
        args.b1,
        args.b2,
        o.workers,
        o.ranks,
        o.wall_ms,
        o.leaf_tasks,
        o.messages,
        residual
    )
}

/// Prints the CSV (header + row) to stdout and appends the row to `--out`
/// if given, writing the header only when the file is new or empty.
fn report(args: &RunArgs, o: &RunOutcome) -> Result<(), Error> {
    let row = csv_row(args, o);
    println!("{CSV_HEADER}");
    println!("{row}");
    if let Some(path) = &args.out {
        let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(f, "{CSV_HEADER}")?;
        }
        writeln!(f, "{row}")?;
    }
    Ok(())
}

fn run(args: &RunArgs, repeats: Option<usize>) -> ExitCode {
    // A bench wrapper passes `repeats`; a plain run is one repetition.
    let repeats = repeats.unwrap_or(1).max(1);
    let mut best: Option<RunOutcome> = None;
    for _ in 0..repeats {
        let outcome = match execute(args) {
            Ok(o) => o,
            Err(e) => return fail(exit_code_for(&e), e),
        };
        if best.as_ref().is_none_or(|b| outcome.wall_ms < b.wall_ms) {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least one repetition");

    if let Some(r) = best.residual {
        if !(r <= RESIDUAL_TOLERANCE) {
            // Still report the row so the failure is inspectable.
            let _ = report(args, &best);
            return fail(
                EXIT_VERIFY,
                format!("verification failed: residual {r:.3e} exceeds {RESIDUAL_TOLERANCE:.0e}"),
            );
        }
    }
    if let Err(e) = report(args, &best) {
        return fail(exit_code_for(&e), e);
    }
    ExitCode::SUCCESS
}

fn bench(args: &BenchArgs) -> ExitCode {
    run(&args.run, Some(args.repeats))
}

fn trace_check(file: &Path) -> ExitCode {
    let text = match fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, format!("cannot read trace file {file:?}: {e}")),
    };
    let events = match read_trace(&text) {
        Ok(ev) => ev,
        Err(e) => return fail(EXIT_CONFIG, format!("malformed trace: {e}")),
    };
    let violations = checker::check(&events);
    if violations.is_empty() {
        println!("ok: {} events", events.len());
        return ExitCode::SUCCESS;
    }
    for v in &violations {
        println!("{v}");
    }
    fail(
        EXIT_TRACE,
        format!("{} trace violation(s) in {file:?}", violations.len()),
    )
}
