//! Command-line front end for the simulator core.
//!
//! Three commands: `run` simulates one mode and writes a trace and report,
//! `compare` runs push and fetch back to back and reports the speedup,
//! `validate` parses inputs without simulating. Exit codes: 0 success,
//! 1 bad input or configuration, 2 a simulation that cannot make progress.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fpa_core::{
    parse_program, run, run_compare, run_fetch_baseline, CompareReport, Mode, ProgramGraph, Report,
    SimError, SimOutcome, SimulationConfig,
};

#[derive(Parser)]
#[command(
    name = "fpa-sim",
    version,
    about = "Simulate function-level push-feed execution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the program once and write its trace and report.
    Run(RunArgs),
    /// Simulate both push and fetch modes and report the speedup.
    Compare(CompareArgs),
    /// Parse the program and configuration, then stop.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Program file to simulate.
    #[arg(long)]
    program: PathBuf,
    /// Machine description; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suppress the summary on standard output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Where to write the report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Where to write the trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Override the configured simulation mode.
    #[arg(long, value_enum)]
    mode: Option<RunMode>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Where to write the combined report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Trace path stem; the push and fetch traces get distinguishing
    /// suffixes so neither overwrites the other.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunMode {
    Push,
    Fetch,
}

/// A failure plus the exit code it deserves.
enum Failure {
    /// Unreadable or invalid input: exit 1.
    Input(String),
    /// The simulation itself got stuck: exit 2.
    Stuck(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; only real usage
            // errors should exit nonzero.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("fpa-sim: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Stuck(msg)) => {
            eprintln!("fpa-sim: {msg}");
            ExitCode::from(2)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let (graph, config) = load_inputs(&args.input)?;
    let mode = match args.mode {
        Some(RunMode::Push) => Mode::Push,
        Some(RunMode::Fetch) => Mode::Fetch,
        None => match config.mode {
            Mode::Compare => {
                return Err(Failure::Input(
                    "configuration selects compare mode; use `fpa-sim compare` or pass --mode"
                        .into(),
                ))
            }
            other => other,
        },
    };
    let outcome = match mode {
        Mode::Fetch => run_fetch_baseline(&graph, &config),
        _ => simulate(&graph, &config)?,
    };
    let report = Report::new(&outcome.stats, mode);
    if let Some(path) = &args.report {
        write_atomic(path, &report.to_json())?;
    }
    if let Some(path) = &args.trace {
        write_atomic(path, &outcome.trace.to_csv_string())?;
    }
    if !args.input.quiet {
        print!("{}", run_summary(&report, graph.len()));
        announce_outputs(args.report.as_deref(), args.trace.as_deref());
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Failure> {
    let (graph, config) = load_inputs(&args.input)?;
    let outcome = run_compare(&graph, &config).map_err(sim_failure)?;
    let report = CompareReport {
        mode: Mode::Compare.as_str().to_string(),
        push: Report::new(&outcome.push.stats, Mode::Push),
        fetch: Report::new(&outcome.fetch.stats, Mode::Fetch),
        ratio: outcome.ratio,
    };
    if let Some(path) = &args.report {
        write_atomic(path, &report.to_json())?;
    }
    let traces = args.trace.as_ref().map(|stem| {
        (
            derive_trace_path(stem, "push"),
            derive_trace_path(stem, "fetch"),
        )
    });
    if let Some((push_path, fetch_path)) = &traces {
        write_atomic(push_path, &outcome.push.trace.to_csv_string())?;
        write_atomic(fetch_path, &outcome.fetch.trace.to_csv_string())?;
    }
    if !args.input.quiet {
        println!("functions:      {}", graph.len());
        println!("push makespan:  {} cycles", report.push.makespan);
        println!("fetch makespan: {} cycles", report.fetch.makespan);
        println!("speedup:        {:.2}x", report.ratio);
        if let Some(path) = &args.report {
            println!("report:         {}", path.display());
        }
        if let Some((push_path, fetch_path)) = &traces {
            println!(
                "traces:         {} {}",
                push_path.display(),
                fetch_path.display()
            );
        }
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let (graph, config) = load_inputs(&args.input)?;
    if !args.input.quiet {
        println!(
            "{}: {} functions, {} dependencies, critical path {} cycles, {} units configured",
            args.input.program.display(),
            graph.len(),
            graph.edges().count(),
            graph.critical_path_length(),
            config.total_fpus(),
        );
    }
    Ok(())
}

fn load_inputs(input: &InputArgs) -> Result<(ProgramGraph, SimulationConfig), Failure> {
    let text = fs::read_to_string(&input.program)
        .map_err(|e| Failure::Input(format!("cannot open {}: {e}", input.program.display())))?;
    let graph = parse_program(&text)
        .map_err(|e| Failure::Input(format!("{}: {e}", input.program.display())))?;
    let config = match &input.config {
        Some(path) => SimulationConfig::load(path).map_err(|e| Failure::Input(e.to_string()))?,
        None => SimulationConfig::default(),
    };
    Ok((graph, config))
}

fn simulate(graph: &ProgramGraph, config: &SimulationConfig) -> Result<SimOutcome, Failure> {
    run(graph, config).map_err(sim_failure)
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::Deadlock { .. } => Failure::Stuck(e.to_string()),
        other => Failure::Input(other.to_string()),
    }
}

fn run_summary(report: &Report, functions: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode:       {}", report.mode);
    let _ = writeln!(out, "functions:  {functions}");
    let _ = writeln!(out, "makespan:   {} cycles", report.makespan);
    let _ = writeln!(out, "throughput: {:.4} functions/cycle", report.throughput);
    let busy: Vec<String> = report
        .per_fpu_utilization
        .iter()
        .map(|u| format!("{:.0}%", u * 100.0))
        .collect();
    let _ = writeln!(out, "unit load:  {}", busy.join(" "));
    out
}

fn announce_outputs(report: Option<&Path>, trace: Option<&Path>) {
    if let Some(path) = report {
        println!("report:     {}", path.display());
    }
    if let Some(path) = trace {
        println!("trace:      {}", path.display());
    }
}

/// `out.csv` becomes `out.push.csv`; a path without an extension just
/// gains a suffix.
fn derive_trace_path(stem: &Path, label: &str) -> PathBuf {
    match stem.extension().and_then(|e| e.to_str()) {
        Some(ext) => stem.with_extension(format!("{label}.{ext}")),
        None => {
            let mut s = stem.as_os_str().to_os_string();
            s.push(format!(".{label}"));
            PathBuf::from(s)
        }
    }
}

/// Write through a temporary file in the target directory so a crash never
/// leaves a half-written report or trace behind.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail =
        |e: &dyn std::fmt::Display| Failure::Input(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e))?;
    Ok(())
}
