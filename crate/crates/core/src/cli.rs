//! The `issng` command-line driver.
//!
//! `issng --example example1 --n 64 ...` runs one solve and optionally writes
//! the iteration history (`--csv`) and a JSON report (`--json`).
//! `issng sweep --example example1 --grids 32,64,128 --c1 0.5,1` runs a grid
//! of solves and writes one summary table.
//!
//! Exit codes: 0 converged, 2 solver failure (outputs still written),
//! 1 usage or input errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::examples::{control_error, example1, example1_printed_forcing, example2, ExampleCase};
use crate::io::{
    read_problem_file, write_history_csv, write_sweep_csv, InitialGuess, IoError, ProblemSummary, RunReport,
    SweepRow,
};
use crate::problem::ProblemError;
use crate::solver::{solve, SolverConfig, SolverError, Variant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER_FAILURE: i32 = 2;

/// Environment variable capping the number of sweep worker threads.
pub const THREADS_ENV: &str = "ISSNG_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: IoError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExampleName {
    Example1,
    /// Example 1 with the `(π²/10³) z` forcing term.
    #[value(name = "example1-printed")]
    Example1Printed,
    Example2,
}

impl ExampleName {
    pub fn name(self) -> &'static str {
        match self {
            ExampleName::Example1 => "example1",
            ExampleName::Example1Printed => "example1-printed",
            ExampleName::Example2 => "example2",
        }
    }

    pub fn build(self, n: usize, alpha: f64) -> Result<ExampleCase, ProblemError> {
        match self {
            ExampleName::Example1 => example1(n, alpha),
            ExampleName::Example1Printed => example1_printed_forcing(n, alpha),
            ExampleName::Example2 => example2(n, alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    #[value(name = "issng-l")]
    IssngL,
    Issng,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::IssngL => Variant::IssngL,
            VariantArg::Issng => Variant::Issng,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "issng",
    version,
    about = "Inexact semismooth Newton-GMRES for elliptic optimal control",
    args_conflicts_with_subcommands = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve over a list of grids and c1 values and write one summary CSV.
    Sweep(SweepArgs),
}

/// Problem selection shared by `run` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Built-in benchmark problem.
    #[arg(long, value_enum, conflicts_with = "file")]
    pub example: Option<ExampleName>,
    /// JSON problem file.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Regularization parameter for built-in examples.
    #[arg(long, default_value_t = 1e-3)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "issng-l")]
    pub variant: VariantArg,
    /// `zeros` or `constant:<c>`.
    #[arg(long = "init", default_value = "zeros")]
    pub init: String,
}

/// Overrides for individual solver parameters.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverOverrides {
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub delta0: Option<f64>,
    #[arg(long)]
    pub eta0: Option<f64>,
    #[arg(long)]
    pub eta_max: Option<f64>,
    #[arg(long)]
    pub eta_min: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub a1: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_newton: Option<usize>,
    #[arg(long)]
    pub max_backtracks: Option<usize>,
    /// Nonmonotone memory length; unbounded when absent.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub gmres_restart: Option<usize>,
    #[arg(long)]
    pub gmres_max_iters: Option<usize>,
}

impl SolverOverrides {
    pub fn apply(&self, cfg: &mut SolverConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(theta, delta0, eta0, eta_max, eta_min, gamma, a1, tol, max_newton, max_backtracks, gmres_restart);
        if self.window.is_some() {
            cfg.window = self.window;
        }
        if self.gmres_max_iters.is_some() {
            cfg.gmres_max_iters = self.gmres_max_iters;
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Grid subintervals per dimension (built-in examples only).
    #[arg(long, default_value_t = 32)]
    pub n: usize,
    #[arg(long)]
    pub c1: Option<f64>,
    #[command(flatten)]
    pub solver: SolverOverrides,
    /// Iteration history output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON report output.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Comma-separated grid sizes n.
    #[arg(long)]
    pub grids: String,
    /// Comma-separated c1 values.
    #[arg(long, default_value = "0.5")]
    pub c1: String,
    #[command(flatten)]
    pub solver: SolverOverrides,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Where the problem comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Example(ExampleName),
    File(PathBuf),
}

/// A fully resolved single run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub source: ProblemSource,
    /// Ignored for file problems, which fix their own grid.
    pub n: usize,
    pub alpha: f64,
    pub initial_guess: InitialGuess,
    pub config: SolverConfig,
    pub csv_path: Option<PathBuf>,
    pub json_path: Option<PathBuf>,
}

fn resolve_source(p: &ProblemArgs) -> Result<ProblemSource, CliError> {
    match (&p.example, &p.file) {
        (Some(e), None) => Ok(ProblemSource::Example(*e)),
        (None, Some(f)) => Ok(ProblemSource::File(f.clone())),
        _ => Err(CliError::Usage("exactly one of --example or --file is required".into())),
    }
}

fn base_config(p: &ProblemArgs, overrides: &SolverOverrides) -> SolverConfig {
    let mut cfg = SolverConfig {
        variant: p.variant.into(),
        ..SolverConfig::default()
    };
    overrides.apply(&mut cfg);
    cfg
}

impl RunSpec {
    pub fn from_args(a: &RunArgs) -> Result<Self, CliError> {
        let source = resolve_source(&a.problem)?;
        let initial_guess: InitialGuess = a.problem.init.parse()?;
        let mut config = base_config(&a.problem, &a.solver);
        if let Some(c1) = a.c1 {
            config.c1 = c1;
        }
        config.validate().map_err(SolverError::from)?;
        Ok(RunSpec {
            source,
            n: a.n,
            alpha: a.problem.alpha,
            initial_guess,
            config,
            csv_path: a.csv.clone(),
            json_path: a.json.clone(),
        })
    }
}

/// Problem instance plus its exact control, if known.
fn load_case(source: &ProblemSource, n: usize, alpha: f64) -> Result<(String, ExampleCase), CliError> {
    match source {
        ProblemSource::Example(e) => Ok((e.name().to_string(), e.build(n, alpha)?)),
        ProblemSource::File(path) => {
            let instance = read_problem_file(path)?;
            let name = format!("file:{}", path.display());
            Ok((
                name.clone(),
                ExampleCase {
                    name,
                    instance,
                    exact_control: None,
                },
            ))
        }
    }
}

fn write_output(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<(), IoError>) -> Result<(), CliError> {
    let wrap = |source: IoError| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|e| wrap(e.into()))?;
    let mut w = BufWriter::new(file);
    write(&mut w).map_err(wrap)?;
    w.flush().map_err(|e| wrap(e.into()))?;
    Ok(())
}

/// Runs one solve and writes the requested outputs.
pub fn execute(spec: &RunSpec) -> Result<RunReport, CliError> {
    let (source, case) = load_case(&spec.source, spec.n, spec.alpha)?;
    let z0 = spec.initial_guess.state(case.instance.grid());
    let report = solve(&case.instance, &z0, &spec.config)?;
    let err = match &case.exact_control {
        Some(u) => Some(control_error(&report.final_control, u).map_err(ProblemError::from)?),
        None => None,
    };
    let run = RunReport::new(
        ProblemSummary::of(&source, &case.instance),
        spec.initial_guess,
        spec.config.clone(),
        &report,
        err,
    );
    if let Some(path) = &spec.csv_path {
        write_output(path, |w| write_history_csv(w, &run.iterations))?;
    }
    if let Some(path) = &spec.json_path {
        let text = run.to_json()?;
        write_output(path, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    Ok(run)
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| CliError::Usage(format!("bad value '{s}' in --{flag}")))
        })
        .collect()
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

/// Runs every `(n, c1)` combination. Rows come back sorted by `n`, then `c1`.
pub fn sweep(
    source: ExampleName,
    alpha: f64,
    initial_guess: InitialGuess,
    base: &SolverConfig,
    grids: &[usize],
    c1s: &[f64],
) -> Result<Vec<SweepRow>, CliError> {
    if grids.is_empty() {
        return Err(CliError::Usage("--grids needs at least one grid size".into()));
    }
    if c1s.is_empty() {
        return Err(CliError::Usage("--c1 needs at least one value".into()));
    }
    let mut jobs = Vec::new();
    for &n in grids {
        for &c1 in c1s {
            let cfg = SolverConfig { c1, ..base.clone() };
            cfg.validate().map_err(SolverError::from)?;
            jobs.push((n, cfg));
        }
    }
    let one = |(n, cfg): &(usize, SolverConfig)| -> SweepRow {
        let mut row = SweepRow {
            n: *n,
            c1: cfg.c1,
            variant: cfg.variant,
            norm_ry: f64::NAN,
            norm_rp: f64::NAN,
            iters: 0,
            wall_time: 0.0,
            peak_krylov_bytes: 0,
            failure_reason: None,
        };
        let result = source
            .build(*n, alpha)
            .map_err(SolverError::from)
            .and_then(|case| solve(&case.instance, &initial_guess.state(case.instance.grid()), cfg));
        match result {
            Ok(rep) => {
                (row.norm_ry, row.norm_rp) = rep.final_norms();
                row.iters = rep.newton_iterations();
                row.wall_time = rep.wall_time;
                row.peak_krylov_bytes = rep.peak_krylov_bytes;
                row.failure_reason = rep.failure_reason.map(|f| f.to_string());
            }
            Err(e) => row.failure_reason = Some(e.to_string()),
        }
        row
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_cap() {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker threads: {e}")))?;
    let mut rows: Vec<SweepRow> = pool.install(|| jobs.par_iter().map(one).collect());
    rows.sort_by(|a, b| a.n.cmp(&b.n).then(a.c1.total_cmp(&b.c1)));
    Ok(rows)
}

fn run_sweep(a: &SweepArgs) -> Result<i32, CliError> {
    let ProblemSource::Example(example) = resolve_source(&a.problem)? else {
        return Err(CliError::Usage("sweep needs --example; file problems fix their own grid".into()));
    };
    let initial_guess: InitialGuess = a.problem.init.parse()?;
    let base = base_config(&a.problem, &a.solver);
    let grids: Vec<usize> = parse_list("grids", &a.grids)?;
    let c1s: Vec<f64> = parse_list("c1", &a.c1)?;
    let rows = sweep(example, a.problem.alpha, initial_guess, &base, &grids, &c1s)?;
    match &a.out {
        Some(path) => write_output(path, |w| write_sweep_csv(w, &rows))?,
        None => write_sweep_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(EXIT_OK)
}

fn run_single(a: &RunArgs) -> Result<i32, CliError> {
    let spec = RunSpec::from_args(a)?;
    let run = execute(&spec)?;
    println!(
        "{} n={} {}: {} after {} Newton iterations, ||r_y|| = {:e}, ||r_p|| = {:e}, {:.3} s",
        run.problem.source,
        run.problem.n,
        run.config.variant.name(),
        if run.converged { "converged" } else { "stopped" },
        run.newton_iterations,
        run.final_norm_ry,
        run.final_norm_rp,
        run.wall_time
    );
    if let Some(e) = &run.control_error {
        println!("control error: max {:e}, l2 {:e}", e.linf, e.l2);
    }
    match &run.failure_reason {
        None if run.converged => Ok(EXIT_OK),
        Some(reason) => {
            eprintln!("solver failure: {reason}");
            Ok(EXIT_SOLVER_FAILURE)
        }
        None => Ok(EXIT_SOLVER_FAILURE),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Some(Command::Sweep(a)) => run_sweep(a),
        None => run_single(&cli.run),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run `issng --help` for usage");
            }
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("issng").chain(args.iter().copied()))
    }

    #[test]
    fn run_flags_resolve() {
        let cli = parse(&["--example", "example2", "--n", "16", "--variant", "issng", "--init", "constant:2", "--c1", "1.3"])
            .unwrap();
        assert!(cli.command.is_none());
        let spec = RunSpec::from_args(&cli.run).unwrap();
        assert_eq!(spec.source, ProblemSource::Example(ExampleName::Example2));
        assert_eq!(spec.n, 16);
        assert_eq!(spec.initial_guess, InitialGuess::Constant(2.0));
        assert_eq!(spec.config.variant, Variant::Issng);
        assert_eq!(spec.config.c1, 1.3);
    }

    #[test]
    fn overrides_apply() {
        let cli = parse(&["--example", "example1", "--eta0", "0.25", "--window", "3", "--gmres-restart", "20"]).unwrap();
        let spec = RunSpec::from_args(&cli.run).unwrap();
        assert_eq!(spec.config.eta0, 0.25);
        assert_eq!(spec.config.window, Some(3));
        assert_eq!(spec.config.gmres_restart, 20);
        assert_eq!(spec.config.gamma, SolverConfig::default().gamma);
    }

    #[test]
    fn source_is_required_and_exclusive() {
        let cli = parse(&[]).unwrap();
        assert!(matches!(RunSpec::from_args(&cli.run), Err(CliError::Usage(_))));
        assert!(parse(&["--example", "example1", "--file", "x.json"]).is_err());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cli = parse(&["--example", "example1", "--theta", "1.5"]).unwrap();
        assert!(RunSpec::from_args(&cli.run).is_err());
        let cli = parse(&["--example", "example1", "--init", "ones"]).unwrap();
        assert!(RunSpec::from_args(&cli.run).is_err());
    }

    #[test]
    fn sweep_subcommand_parses() {
        let cli = parse(&["sweep", "--example", "example1", "--grids", "8,4", "--c1", "0.5,1"]).unwrap();
        let Some(Command::Sweep(a)) = cli.command else { panic!() };
        assert_eq!(parse_list::<usize>("grids", &a.grids).unwrap(), vec![8, 4]);
        assert_eq!(parse_list::<f64>("c1", &a.c1).unwrap(), vec![0.5, 1.0]);
        assert!(parse_list::<usize>("grids", "8,x").is_err());
        assert!(parse_list::<usize>("grids", "").unwrap().is_empty());
    }

    #[test]
    fn sweep_rows_sorted_and_empty_rejected() {
        let base = SolverConfig::default();
        let rows = sweep(ExampleName::Example1, 1e-3, InitialGuess::Zeros, &base, &[8, 4], &[1.0, 0.5]).unwrap();
        let keys: Vec<_> = rows.iter().map(|r| (r.n, r.c1)).collect();
        assert_eq!(keys, vec![(4, 0.5), (4, 1.0), (8, 0.5), (8, 1.0)]);
        assert!(matches!(
            sweep(ExampleName::Example1, 1e-3, InitialGuess::Zeros, &base, &[], &[0.5]),
            Err(CliError::Usage(_))
        ));
    }
}
