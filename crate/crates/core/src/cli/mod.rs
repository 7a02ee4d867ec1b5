//! Command-line front end: run, sweep, list and export scenarios.
//!
//! Exit codes: 0 success, 1 parse or usage error, 2 validation failure,
//! 3 integration failure, 4 invariant violation under `--check-invariants`.

pub mod output;
pub mod sweep;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analysis::check_trajectory_invariants;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::scenario::{Scenario, ScenarioDocument, BUILTINS};
use crate::solver::{integrate, Method, Trajectory};

pub use output::{build_summary, csv_header, write_summary, write_trajectory_csv, RunSummary};
pub use sweep::{run_sweep, SweepAxis, SweepTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INTEGRATION: i32 = 3;
pub const EXIT_INVARIANTS: i32 = 4;

pub const OUTPUT_DIR_ENV: &str = "DYNCOMM_OUTPUT_DIR";

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } | Error::Usage(_) | Error::Io { .. } => EXIT_USAGE,
        Error::Validation(_)
        | Error::Config(_)
        | Error::Dimension(_)
        | Error::State(_)
        | Error::Precondition(_) => EXIT_VALIDATION,
        Error::Integration(_) | Error::Evaluation(_) => EXIT_INTEGRATION,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dyncomm",
    version,
    about = "Population games on dynamic community networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a scenario and write its trajectory and summary.
    Run(RunArgs),
    /// Run every combination of parameter overrides.
    Sweep(RunArgs),
    /// List built-in scenarios.
    List,
    /// Print a scenario as a complete JSON document.
    Export(ExportArgs),
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// Scenario file, or builtin:NAME.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// rk4 or rk45.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = "output")]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Check conservation and field identities at every recorded sample.
    #[arg(long)]
    pub check_invariants: bool,
    /// PATH=V1,V2,... or PATH=START:STOP:COUNT; repeat for a product.
    #[arg(long = "sweep", value_name = "SPEC")]
    pub sweeps: Vec<String>,
    /// Worker threads for sweeps and invariant checks.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub scenario: String,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl RunArgs {
    fn execution(&self) -> Execution {
        self.jobs
            .map_or_else(Execution::default, Execution::with_jobs)
    }

    /// Loads the scenario document with command-line overrides applied.
    pub fn document(&self) -> Result<ScenarioDocument> {
        let mut doc = ScenarioDocument::load(&self.scenario)?;
        let cfg = &mut doc.integrator;
        if let Some(v) = self.t_end {
            cfg.t_end = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.record_every {
            cfg.record_every = v;
        }
        if doc.name.is_empty() {
            doc.name = "scenario".into();
        }
        Ok(doc)
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    pub check_invariants: bool,
    pub exec: Execution,
}

#[derive(Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub trajectory_path: PathBuf,
    pub summary_path: PathBuf,
    pub invariants_passed: bool,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// Validates, integrates, analyses and writes one scenario into
/// `opts.output_dir`.
pub fn execute(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    let report = scenario.model.validate()?;
    if !report.passed() {
        return Err(Error::Validation(Box::new(report)));
    }
    let started = Instant::now();
    let trajectory = integrate(scenario)?;
    let mut summary = build_summary(scenario, &trajectory, report.warnings.clone())?;
    let smoothing = scenario.integrator.smooth_argmax_beta;
    let mut invariants_passed = true;
    if opts.check_invariants {
        let inv = check_trajectory_invariants(&scenario.model, &trajectory, smoothing, opts.exec)?;
        invariants_passed = inv.passed();
        summary.invariants = Some(inv);
    }
    summary.wall_clock_seconds = started.elapsed().as_secs_f64();

    create_dir(&opts.output_dir)?;
    let trajectory_path = opts.output_dir.join(&scenario.output.trajectory);
    let summary_path = opts.output_dir.join(&scenario.output.summary);
    write_trajectory_csv(&trajectory_path, &scenario.model, &trajectory, smoothing)?;
    write_summary(&summary_path, &summary)?;
    Ok(RunOutput {
        summary,
        trajectory,
        trajectory_path,
        summary_path,
        invariants_passed,
    })
}

/// Writes to stdout, ignoring a closed pipe.
fn print_stdout(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn cmd_run(args: &RunArgs) -> Result<i32> {
    let doc = args.document()?;
    let scenario = doc.build()?;
    let opts = RunOptions {
        output_dir: args.output_dir.join(&scenario.name),
        check_invariants: args.check_invariants,
        exec: args.execution(),
    };
    let out = execute(&scenario, &opts)?;
    let s = &out.summary;
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    let mut text = format!("scenario     {} ({})\n", s.scenario, &s.digest[..12]);
    text += &format!(
        "steps        {} in {:.2} s\n",
        s.steps, s.wall_clock_seconds
    );
    text += &format!("terminal y   {}\n", fmt_vec(&s.terminal_y));
    text += &format!("terminal eta {}\n", fmt_vec(&s.terminal_eta));
    text += &format!(
        "population {}, densities {}, system {}\n",
        s.convergence.population.label(),
        s.convergence.densities.label(),
        s.convergence.system.label()
    );
    if let Some(p) = s.convergence.densities.period() {
        text += &format!("density period {p:.4}\n");
    }
    text += &format!("balance residual {:.3e}\n", s.equilibrium.balance_residual);
    text += &format!("trajectory   {}\n", out.trajectory_path.display());
    text += &format!("summary      {}\n", out.summary_path.display());
    print_stdout(&text);
    if let Some(inv) = &s.invariants {
        for c in inv.checks.iter().filter(|c| !c.passed) {
            eprintln!(
                "invariant violated: {} (worst {:e}, tolerance {:e})",
                c.name, c.worst, c.tolerance
            );
        }
    }
    Ok(if out.invariants_passed {
        EXIT_OK
    } else {
        EXIT_INVARIANTS
    })
}

fn cmd_sweep(args: &RunArgs) -> Result<i32> {
    let doc = args.document()?;
    let axes = args
        .sweeps
        .iter()
        .map(|s| s.parse::<SweepAxis>())
        .collect::<Result<Vec<_>>>()?;
    if axes.is_empty() {
        return Err(Error::Usage(
            "sweep needs at least one --sweep PATH=VALUES".into(),
        ));
    }
    let dir = args.output_dir.join(&doc.name).join("sweep");
    let table = run_sweep(&doc, &axes, &dir, args.check_invariants, args.execution())?;
    create_dir(&dir)?;
    let path = dir.join("table.csv");
    let file = std::fs::File::create(&path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    table.write_csv(file)?;
    let mut text = Vec::new();
    table.write_csv(&mut text)?;
    print_stdout(&String::from_utf8_lossy(&text));
    Ok(table.exit_code())
}

fn cmd_export(args: &ExportArgs) -> Result<i32> {
    let doc = ScenarioDocument::load(&args.scenario)?;
    // refuse to export documents that would not load back
    doc.build()?;
    let text = doc.to_json_pretty() + "\n";
    match &args.output {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?,
        None => print_stdout(&text),
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(args) if !args.sweeps.is_empty() => cmd_sweep(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::List => {
            let text: String = BUILTINS
                .iter()
                .map(|(n, d)| format!("{n:<10} {d}\n"))
                .collect();
            print_stdout(&text);
            Ok(EXIT_OK)
        }
        Command::Export(args) => cmd_export(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
