//! `locpar check` and `locpar run`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use locpar_core::eval_par::{
    enumerate_schedules, run_par, ExploreOptions, Metrics, ParError, ParOptions, ParRun, Policy,
};
use locpar_core::eval_seq::{run_seq, RunError, SeqOptions};
use locpar_core::layout::{
    byte_serialize, encode_chunk_file, flatten_result, fragmentation_report, traverse_bytes,
    CanonicalValue, ChunkPolicy, LayoutError, Mode,
};
use locpar_core::store::{dump_heap, Store, TagStyle};
use locpar_core::syntax::Expr;
use locpar_core::typecheck::TypedProgram;
use serde::Serialize;

use crate::diag::{Diagnostic, Kind};
use crate::load;
use crate::report::MetricsReport;
use crate::threads::{run_threads, ThreadError};
use crate::timing::median_ns;
use crate::trace_file::{from_json_lines, to_json_lines};

#[derive(Debug, Parser)]
#[command(
    name = "locpar",
    version,
    about = "Type-check and run programs of the parallel location calculus"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and type-check a program.
    Check {
        file: PathBuf,
        /// Treat every `let` as a spawn point.
        #[arg(long)]
        implicit_par: bool,
    },
    /// Evaluate a program.
    Run(Box<RunArgs>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    /// Sequential evaluation, never forking.
    Seq,
    /// Task-parallel evaluation under a schedule.
    Par,
    /// Every schedule up to a fork bound.
    Explore,
    /// Byte layouts of the result and their traversal time.
    Bench,
}

/// `never`, `always`, `random:SEED` or `trace:FILE`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScheduleArg {
    Never,
    Always,
    Random(u64),
    Trace(PathBuf),
}

impl FromStr for ScheduleArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "never" => Ok(ScheduleArg::Never),
            None if s == "always" => Ok(ScheduleArg::Always),
            Some(("random", seed)) => seed
                .parse()
                .map(ScheduleArg::Random)
                .map_err(|_| format!("bad seed `{seed}`")),
            Some(("trace", path)) if !path.is_empty() => {
                Ok(ScheduleArg::Trace(PathBuf::from(path)))
            }
            _ => Err(format!(
                "unknown schedule `{s}`; expected never, always, random:SEED or trace:FILE"
            )),
        }
    }
}

/// `packed`, `per-node` or `bottom:K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayoutArg(pub Mode);

impl FromStr for LayoutArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "packed" => Ok(LayoutArg(Mode::Packed)),
            None if s == "per-node" => Ok(LayoutArg(Mode::PerNode)),
            Some(("bottom", k)) => k
                .parse()
                .map(|k| LayoutArg(Mode::Bottom(k)))
                .map_err(|_| format!("bad height `{k}`")),
            _ => Err(format!(
                "unknown layout `{s}`; expected packed, per-node or bottom:K"
            )),
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    pub file: PathBuf,
    #[arg(long, value_enum, default_value_t = RunMode::Seq)]
    pub mode: RunMode,
    /// Scheduling policy for `par`.
    #[arg(long, default_value = "always")]
    pub schedule: ScheduleArg,
    /// Check well-formedness of the task set after every decision.
    #[arg(long)]
    pub check_wf_every_step: bool,
    /// Type-check every task after every decision.
    #[arg(long)]
    pub check_types_every_step: bool,
    /// Compare incrementally tracked ends against fresh scans.
    #[arg(long)]
    pub audit: bool,
    /// Print the final heap, one region per line.
    #[arg(long)]
    pub dump_heap: bool,
    /// Print constructor names in full in heap dumps.
    #[arg(long)]
    pub full_tags: bool,
    /// Print one line per step.
    #[arg(long)]
    pub trace: bool,
    /// Treat every `let` as a spawn point.
    #[arg(long)]
    pub implicit_par: bool,
    /// Replay the run's forks and joins on up to N OS threads.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// Write metrics JSON to PATH, or `-` for standard output.
    #[arg(long, value_name = "PATH")]
    pub metrics: Option<String>,
    /// Write the decisions taken as JSON lines.
    #[arg(long, value_name = "FILE")]
    pub emit_trace: Option<PathBuf>,
    /// Forks allowed per schedule in `explore`.
    #[arg(long)]
    pub fork_bound: Option<u32>,
    /// States visited before `explore` gives up.
    #[arg(long, default_value_t = 200_000)]
    pub max_states: usize,
    /// Decisions or steps before a run gives up.
    #[arg(long, default_value_t = 50_000_000)]
    pub max_steps: u64,
    /// Layout for `bench`; both packed and per-node when absent.
    #[arg(long)]
    pub layout: Option<LayoutArg>,
    /// First chunk size in `bench` [default: 64]
    #[arg(long, value_name = "BYTES")]
    pub chunk_initial: Option<usize>,
    /// Growth factor between chunks [default: 2]
    #[arg(long, value_name = "N")]
    pub chunk_factor: Option<usize>,
    /// Largest chunk size [default: 1 GiB]
    #[arg(long, value_name = "BYTES")]
    pub chunk_cap: Option<usize>,
    /// Write the first layout's chunks to FILE.
    #[arg(long, value_name = "FILE")]
    pub emit_chunks: Option<PathBuf>,
    /// Timed traversals per layout in `bench`.
    #[arg(long, default_value_t = 9)]
    pub runs: usize,
}

/// Parses `args` (program name first), runs the command, and returns the
/// exit code. Results go to standard output, diagnostics to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let _ = e.print();
            let d = Diagnostic::usage(e.kind());
            eprintln!("{}", d.to_json_line());
            return d.exit_code();
        }
    };
    let mut out = String::new();
    let result = match &cli.command {
        Command::Check { file, implicit_par } => check(file, *implicit_par, &mut out),
        Command::Run(args) => run(args, &mut out),
    };
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(out.as_bytes());
    let _ = stdout.flush();
    match result {
        Ok(()) => 0,
        Err(d) => {
            eprintln!("{}", d.to_json_line());
            d.exit_code()
        }
    }
}

fn check(file: &Path, implicit: bool, out: &mut String) -> Result<(), Diagnostic> {
    let tp = load(file, implicit)?;
    let _ = writeln!(
        out,
        "ok: {} functions, main : {}",
        tp.program.fundecls.len(),
        tp.main_ty
    );
    Ok(())
}

fn chunk_policy(a: &RunArgs) -> Result<ChunkPolicy, Diagnostic> {
    let d = ChunkPolicy::default();
    let p = ChunkPolicy {
        initial: a.chunk_initial.unwrap_or(d.initial),
        factor: a.chunk_factor.unwrap_or(d.factor),
        cap: a.chunk_cap.unwrap_or(d.cap),
    };
    p.validate().map_err(Diagnostic::usage)?;
    Ok(p)
}

fn write_file(path: &Path, data: &[u8]) -> Result<(), Diagnostic> {
    std::fs::write(path, data).map_err(|e| Diagnostic::io(path, &e))
}

fn run(a: &RunArgs, out: &mut String) -> Result<(), Diagnostic> {
    if a.mode == RunMode::Explore && a.fork_bound.is_none() {
        return Err(Diagnostic::usage("--mode explore needs --fork-bound"));
    }
    if a.threads.is_some() && a.mode != RunMode::Par {
        return Err(Diagnostic::usage("--threads applies to --mode par"));
    }
    if a.runs == 0 {
        return Err(Diagnostic::usage("--runs must be at least 1"));
    }
    let policy = chunk_policy(a)?;
    let tp = load(&a.file, a.implicit_par)?;
    match a.mode {
        RunMode::Seq => seq_mode(&tp, a, out),
        RunMode::Par => par_mode(&tp, a, out),
        RunMode::Explore => explore_mode(&tp, a, out),
        RunMode::Bench => bench_mode(&tp, a, policy, out),
    }
}

fn seq_error(e: RunError) -> Diagnostic {
    let code = match e {
        RunError::Stuck(_) => "Stuck",
        RunError::Blocked(_) => "Blocked",
        RunError::OutOfFuel(_) => "OutOfFuel",
    };
    Diagnostic::semantics(code, e)
}

fn par_error(e: ParError) -> Diagnostic {
    let code = match &e {
        ParError::Stuck { .. } => "Stuck",
        ParError::NoEnabledTransition(_) => "NoEnabledTransition",
        ParError::Join { .. } | ParError::Store(_) => "MergeConflict",
        ParError::Fork { .. } => "Fork",
        ParError::TraceMismatch { .. } => "TraceMismatch",
        ParError::TraceExhausted(_) => "TraceExhausted",
        ParError::TraceUnused(_) => "TraceUnused",
        ParError::IllFormed { .. } => "IllFormed",
        ParError::Preservation { .. } => "Preservation",
        ParError::OutOfFuel(_) => "OutOfFuel",
    };
    Diagnostic::semantics(code, e)
}

fn layout_error(e: LayoutError) -> Diagnostic {
    Diagnostic::semantics("Layout", e)
}

fn tag_style(a: &RunArgs) -> TagStyle {
    if a.full_tags {
        TagStyle::Full
    } else {
        TagStyle::Short
    }
}

/// The value line, heap dump and metrics shared by `seq` and `par`.
fn report(
    tp: &TypedProgram,
    a: &RunArgs,
    value: &Expr,
    store: &Store,
    metrics: &Metrics,
    out: &mut String,
) -> Result<(), Diagnostic> {
    let v = flatten_result(&tp.env, value, &tp.main_ty, store).map_err(layout_error)?;
    let _ = writeln!(out, "value: {v}");
    if a.dump_heap {
        out.push_str(&dump_heap(store, &tp.env, tag_style(a)));
    }
    if let Some(dest) = &a.metrics {
        let json = MetricsReport::new(metrics, &fragmentation_report(store, metrics)).to_json();
        if dest == "-" {
            let _ = writeln!(out, "{json}");
        } else {
            write_file(Path::new(dest), format!("{json}\n").as_bytes())?;
        }
    }
    Ok(())
}

fn seq_mode(tp: &TypedProgram, a: &RunArgs, out: &mut String) -> Result<(), Diagnostic> {
    if a.check_wf_every_step || a.check_types_every_step {
        // Checks work on task sets; a never-forking run is the same
        // evaluation.
        let run = par_run(tp, a, Policy::NeverFork)?;
        return par_output(tp, a, &run, out);
    }
    let r = run_seq(
        &tp.program,
        &tp.env,
        SeqOptions {
            audit: a.audit,
            keep_trace: a.trace,
            max_steps: a.max_steps,
        },
    )
    .map_err(seq_error)?;
    for (n, info) in r.trace.iter().enumerate() {
        let _ = writeln!(out, "step {n}: {info}");
    }
    let metrics = Metrics {
        peak_live_tasks: 1,
        ..Metrics::from_store(&r.state.counters, &r.state.store)
    };
    report(tp, a, &r.value, &r.state.store, &metrics, out)
}

fn par_run(tp: &TypedProgram, a: &RunArgs, policy: Policy) -> Result<ParRun, Diagnostic> {
    let opts = ParOptions {
        audit: a.audit,
        check_wf: a.check_wf_every_step,
        check_types: a.check_types_every_step,
        keep_steps: a.trace,
        max_decisions: a.max_steps,
    };
    run_par(tp, policy, opts).map_err(par_error)
}

fn par_output(
    tp: &TypedProgram,
    a: &RunArgs,
    run: &ParRun,
    out: &mut String,
) -> Result<(), Diagnostic> {
    if a.trace {
        let mut steps = run.steps.iter();
        for d in &run.decisions {
            let id = d.action.task();
            match &d.action {
                locpar_core::eval_par::Action::Step(_) => {
                    if let Some((_, info)) = steps.next() {
                        let _ = writeln!(out, "step {} task {id}: {info}", d.step);
                    }
                }
                locpar_core::eval_par::Action::Fork(_) => {
                    let _ = writeln!(out, "step {} task {id}: fork", d.step);
                }
                locpar_core::eval_par::Action::Join { ivar, .. } => {
                    let _ = writeln!(out, "step {} task {id}: join {ivar}", d.step);
                }
            }
        }
    }
    report(tp, a, &run.value, &run.store, &run.metrics, out)
}

fn par_mode(tp: &TypedProgram, a: &RunArgs, out: &mut String) -> Result<(), Diagnostic> {
    let policy = match &a.schedule {
        ScheduleArg::Never => Policy::NeverFork,
        ScheduleArg::Always => Policy::AlwaysFork,
        ScheduleArg::Random(seed) => Policy::Random(*seed),
        ScheduleArg::Trace(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Diagnostic::io(path, &e))?;
            let ds = from_json_lines(&text)
                .map_err(|e| Diagnostic::new(Kind::Usage, "BadTrace", e).in_file(path))?;
            Policy::Trace(ds)
        }
    };
    let run = par_run(tp, a, policy)?;
    if let Some(path) = &a.emit_trace {
        write_file(path, to_json_lines(&run.decisions).as_bytes())?;
    }
    let Some(n) = a.threads else {
        return par_output(tp, a, &run, out);
    };
    let t = run_threads(tp, &run.decisions, n, a.audit).map_err(|e| match e {
        ThreadError::Par(p) => par_error(p),
        ThreadError::NoThreads => Diagnostic::usage(e),
        other => Diagnostic::semantics("Replay", other),
    })?;
    let simulated =
        flatten_result(&tp.env, &run.value, &tp.main_ty, &run.store).map_err(layout_error)?;
    let threaded =
        flatten_result(&tp.env, &t.value, &tp.main_ty, &t.store).map_err(layout_error)?;
    if simulated != threaded || run.metrics.extra_regions != t.metrics.extra_regions {
        return Err(Diagnostic::semantics(
            "ThreadDivergence",
            format!(
                "threads gave {threaded} with {} extra regions; the schedule gave {simulated} with {}",
                t.metrics.extra_regions, run.metrics.extra_regions
            ),
        ));
    }
    report(tp, a, &t.value, &t.store, &t.metrics, out)
}

#[derive(Serialize)]
struct ExploreReport {
    states: usize,
    terminals: usize,
    distinct_values: usize,
    violations: usize,
    max_forks_seen: u32,
    value: String,
}

fn explore_mode(tp: &TypedProgram, a: &RunArgs, out: &mut String) -> Result<(), Diagnostic> {
    let opts = ExploreOptions {
        max_forks: a.fork_bound.expect("checked by run"),
        max_states: a.max_states,
        check_wf: true,
        check_types: a.check_types_every_step,
    };
    let seq = run_seq(
        &tp.program,
        &tp.env,
        SeqOptions {
            max_steps: a.max_steps,
            ..SeqOptions::default()
        },
    )
    .map_err(seq_error)?;
    let expected =
        flatten_result(&tp.env, &seq.value, &tp.main_ty, &seq.state.store).map_err(layout_error)?;
    let ex = enumerate_schedules(tp, opts).map_err(par_error)?;
    let mut values: Vec<CanonicalValue> = Vec::new();
    for t in &ex.terminals {
        let v = flatten_result(&tp.env, &t.value, &tp.main_ty, &t.store).map_err(layout_error)?;
        if !values.contains(&v) {
            values.push(v);
        }
    }
    let rep = ExploreReport {
        states: ex.states,
        terminals: ex.terminals.len(),
        distinct_values: values.len(),
        violations: ex.violations.len(),
        max_forks_seen: ex.max_forks_seen,
        value: expected.to_string(),
    };
    let _ = writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&rep).expect("report serializes")
    );
    if let Some((sched, v)) = ex.violations.first() {
        return Err(Diagnostic::semantics(
            "IllFormed",
            format!("{}: {} (after {} decisions)", v.rule, v.detail, sched.len()),
        ));
    }
    if values.iter().any(|v| *v != expected) {
        return Err(Diagnostic::semantics(
            "Nondeterminism",
            "a schedule produced a different value",
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchLine {
    layout: String,
    chunks: usize,
    links: usize,
    used_bytes: usize,
    capacity_bytes: usize,
    link_share: f64,
    leaves: u64,
    sum: i64,
    median_ns: u128,
}

fn mode_name(m: Mode) -> String {
    match m {
        Mode::Packed => "packed".into(),
        Mode::PerNode => "per-node".into(),
        Mode::Bottom(k) => format!("bottom:{k}"),
    }
}

fn bench_mode(
    tp: &TypedProgram,
    a: &RunArgs,
    policy: ChunkPolicy,
    out: &mut String,
) -> Result<(), Diagnostic> {
    let r = run_seq(
        &tp.program,
        &tp.env,
        SeqOptions {
            max_steps: a.max_steps,
            ..SeqOptions::default()
        },
    )
    .map_err(seq_error)?;
    let v = flatten_result(&tp.env, &r.value, &tp.main_ty, &r.state.store).map_err(layout_error)?;
    if matches!(v, CanonicalValue::Leaf(_)) {
        return Err(Diagnostic::usage(
            "bench needs a program whose result is a data value",
        ));
    }
    let modes = match a.layout {
        Some(LayoutArg(m)) => vec![m],
        None => vec![Mode::Packed, Mode::PerNode],
    };
    let mut lines = Vec::new();
    for (k, m) in modes.into_iter().enumerate() {
        let (chunks, bm) = byte_serialize(&tp.env, &v, policy, m).map_err(layout_error)?;
        if k == 0 {
            if let Some(path) = &a.emit_chunks {
                write_file(path, &encode_chunk_file(&chunks))?;
            }
        }
        let (agg, ns) = median_ns(a.runs, || traverse_bytes(&tp.env, &chunks.bytes));
        let agg = agg.map_err(layout_error)?;
        lines.push(BenchLine {
            layout: mode_name(m),
            chunks: chunks.chunks.len(),
            links: bm.links,
            used_bytes: bm.used_bytes(),
            capacity_bytes: chunks.bytes.len(),
            link_share: bm.link_share(),
            leaves: agg.leaves,
            sum: agg.sum,
            median_ns: ns,
        });
    }
    let _ = writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&lines).expect("report serializes")
    );
    Ok(())
}
