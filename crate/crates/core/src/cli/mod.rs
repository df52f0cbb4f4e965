//! Command-line experiment runner.
//!
//! Exit codes: `0` success, `2` configuration error, `3` divergence, `1`
//! anything else.

mod config;
mod plot;
mod quadratic;
mod report;
mod search;
mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{
    ExperimentConfig, ExperimentKind, Overrides, QuadraticInit, RetrainSpec, SearchSpec, SweepSpec, TaskSpec,
};
pub use plot::{emit_plot, parse_phase_points, read_phase_points, render_svg, PlotFrame, PlotSpec, QUADRATIC_HEADER};
pub use quadratic::{quadratic_run, run_quadratic, QuadraticOutcome, DESCENT_SLACK};
pub use report::{
    Comparison, ComparisonRow, DivergenceSummary, FinalPoint, ManifestEntry, OutputDir, RetrainSummary, RunReport,
    RunStatus, RunSummary, REPORT_FILE,
};
pub use search::{run_retrain, run_search};
pub use sweep::{run_sweep, SweepRow, SWEEP_FILE};

use crate::diagnostics::quadratic_equilibrium;
use crate::error::{Error, Result};
use crate::solvers::SolverKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Env var capping the number of worker threads.
pub const WORKERS_ENV: &str = "RARTS_WORKERS";

/// Thread pool sized by `RARTS_WORKERS`, or the number of processors.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Divergence(_) | Error::RetrainDiverged { .. } => EXIT_DIVERGENCE,
        _ => EXIT_OTHER,
    }
}

/// Runs the experiment described by `cfg`.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunReport> {
    match cfg.kind {
        ExperimentKind::Quadratic => run_quadratic(cfg),
        ExperimentKind::Search => run_search(cfg),
        ExperimentKind::Retrain => run_retrain(cfg),
        ExperimentKind::Sweep => run_sweep(cfg),
    }
}

#[derive(Debug, Parser)]
#[command(name = "rarts", version, about = "Relaxed architecture search experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a solver on the solvable quadratic model.
    Quadratic(RunArgs),
    /// Search the toy supernet, discretize and retrain.
    Search(RunArgs),
    /// Retrain a given genotype.
    Retrain(RunArgs),
    /// Quadratic runs over a lambda x beta x seed grid.
    Sweep(RunArgs),
    /// Draw a quadratic trajectory CSV as an SVG phase plot.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (JSON). Built-in defaults are used without it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectory logging interval.
    #[arg(long)]
    pub log_every: Option<u64>,
    #[arg(long)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lr_w: Option<f64>,
    #[arg(long)]
    pub lr_y: Option<f64>,
    #[arg(long)]
    pub lr_alpha: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Quadratic trajectory CSV.
    pub csv: PathBuf,
    /// SVG file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub title: Option<String>,
    /// With `--beta`, marks the equilibrium for these parameters.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out.clone(),
            seed: self.seed,
            log_every: self.log_every,
            solver: self.solver,
            lambda: self.lambda,
            beta: self.beta,
            lr_w: self.lr_w,
            lr_y: self.lr_y,
            lr_alpha: self.lr_alpha,
            xi: self.xi,
            steps: self.steps,
        }
    }

    /// Config file (or defaults) with command-line overrides applied.
    pub fn resolve(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let cfg = ExperimentConfig::load(path)?;
                if cfg.kind != kind {
                    return Err(Error::Config(format!(
                        "config is for `{}`, not `{}`",
                        cfg.kind.name(),
                        kind.name()
                    )));
                }
                cfg
            }
            None => ExperimentConfig::default_for(kind),
        };
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(report: &RunReport, out: &std::path::Path) {
    for r in report.runs.iter().chain(&report.baseline_runs) {
        let status = match r.status {
            RunStatus::Ok => "ok",
            RunStatus::Diverged => "diverged",
            RunStatus::Failed => "failed",
        };
        let mut line = format!("seed {} {} {status}", r.seed, r.solver);
        if let (Some(l), Some(b)) = (r.lambda, r.beta) {
            line += &format!(" lambda={l} beta={b}");
        }
        if let Some(p) = r.point {
            line += &format!(" alpha={:.6} w={:.6} y={:.6}", p.alpha, p.w, p.y);
        }
        if let Some(res) = r.residual {
            line += &format!(" residual={:.3e}", res.max());
        }
        if let Some(g) = &r.genotype {
            let ops: Vec<&str> = g.edges.iter().map(|o| o.name()).collect();
            line += &format!(" genotype=[{}]", ops.join(","));
        }
        if r.recovered.is_some() {
            line += &format!(" recovered={}", r.fully_recovered());
        }
        if let Some(rt) = r.retrain {
            line += &format!(" test_mse={:.3e}", rt.test_mse);
        }
        if let Some(e) = &r.error {
            line += &format!(" error: {e}");
        }
        println!("{line}");
    }
    if let Some(c) = &report.comparison {
        println!(
            "mean val MSE: {} {:?}, {} {:?}",
            c.primary, c.mean_primary_val_mse, c.baseline, c.mean_baseline_val_mse
        );
    }
    println!("wrote {} files to {}", report.manifest.len(), out.display());
}

fn dispatch(cli: Cli) -> Result<i32> {
    let kind = match &cli.command {
        Command::Quadratic(_) => ExperimentKind::Quadratic,
        Command::Search(_) => ExperimentKind::Search,
        Command::Retrain(_) => ExperimentKind::Retrain,
        Command::Sweep(_) => ExperimentKind::Sweep,
        Command::Plot(p) => {
            let equilibrium = match (p.lambda, p.beta) {
                (Some(l), Some(b)) => {
                    let eq = quadratic_equilibrium(l, b)?;
                    Some((eq.alpha, eq.w))
                }
                (None, None) => None,
                _ => return Err(Error::config("--lambda and --beta go together")),
            };
            let spec = PlotSpec {
                title: p.title.clone(),
                equilibrium,
            };
            let bytes = emit_plot(&p.csv, &p.out, &spec)?;
            println!("wrote {} ({bytes} bytes)", p.out.display());
            return Ok(EXIT_OK);
        }
    };
    let args = match &cli.command {
        Command::Quadratic(a) | Command::Search(a) | Command::Retrain(a) | Command::Sweep(a) => a,
        Command::Plot(_) => unreachable!(),
    };
    let cfg = args.resolve(kind)?;
    let report = execute(&cfg)?;
    print_summary(&report, cfg.out_dir()?);
    Ok(report.exit_code())
}

/// Parses `args` (including the program name), runs, and returns the
/// process exit code. Errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
