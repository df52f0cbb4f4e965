use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::quadratic::{csv_io, quadratic_run};
use super::report::{OutputDir, RunReport, RunStatus, RunSummary};
use super::worker_pool;
use crate::error::{Error, Result};

pub const SWEEP_FILE: &str = "sweep.csv";

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub beta: f64,
    pub seed: u64,
    pub status: RunStatus,
    pub steps: Option<u64>,
    pub alpha: Option<f64>,
    pub w: Option<f64>,
    pub y: Option<f64>,
    pub r_w: Option<f64>,
    pub r_y: Option<f64>,
    pub r_alpha: Option<f64>,
    pub descent_violations: Option<usize>,
    pub eq_alpha: Option<f64>,
    pub eq_w: Option<f64>,
    pub eq_y: Option<f64>,
    pub error: Option<String>,
}

impl From<&RunSummary> for SweepRow {
    fn from(s: &RunSummary) -> Self {
        let error = match (&s.error, &s.equilibrium_error) {
            (Some(a), Some(b)) => Some(format!("{a}; {b}")),
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        SweepRow {
            lambda: s.lambda.unwrap_or(f64::NAN),
            beta: s.beta.unwrap_or(f64::NAN),
            seed: s.seed,
            status: s.status,
            steps: s.steps,
            alpha: s.point.map(|p| p.alpha),
            w: s.point.map(|p| p.w),
            y: s.point.map(|p| p.y),
            r_w: s.residual.map(|r| r.r_w),
            r_y: s.residual.map(|r| r.r_y),
            r_alpha: s.residual.map(|r| r.r_alpha),
            descent_violations: s.descent_violations,
            eq_alpha: s.equilibrium.map(|e| e.alpha),
            eq_w: s.equilibrium.map(|e| e.w),
            eq_y: s.equilibrium.map(|e| e.y),
            error,
        }
    }
}

/// Quadratic runs over the `lambda x beta x seed` grid. A failing cell is
/// recorded in its row and does not stop the others.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<RunReport> {
    if cfg.kind != ExperimentKind::Sweep {
        return Err(Error::config("run_sweep needs kind = sweep"));
    }
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut out = OutputDir::create(cfg.out_dir()?)?;
    let mut cells: Vec<(f64, f64, u64)> = Vec::new();
    for &l in &cfg.sweep.lambdas {
        for &b in &cfg.sweep.betas {
            for &s in &cfg.seeds {
                cells.push((l, b, s));
            }
        }
    }
    cells.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)));
    cells.dedup();

    let summaries: Vec<RunSummary> = worker_pool()?.install(|| {
        cells
            .par_iter()
            .map(|&(lambda, beta, seed)| {
                let mut hp = cfg.hyper.clone();
                hp.lambda = lambda;
                hp.beta = beta;
                let mut s = match quadratic_run(cfg, cfg.solver, &hp, &cfg.stop, seed, false) {
                    Ok(o) => o.summary,
                    Err(e) => {
                        let mut s = RunSummary::new(seed, cfg.solver);
                        s.status = RunStatus::Failed;
                        s.error = Some(e.to_string());
                        s
                    }
                };
                s.lambda = Some(lambda);
                s.beta = Some(beta);
                s
            })
            .collect()
    });

    let mut csv = csv::Writer::from_writer(Vec::new());
    for s in &summaries {
        csv.serialize(SweepRow::from(s)).map_err(csv_io)?;
    }
    let bytes = csv.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.write(SWEEP_FILE, &bytes)?;

    let mut report = RunReport::new(cfg);
    report.runs = summaries;
    report.wall_clock_seconds = cfg.record_wall_clock.then(|| start.elapsed().as_secs_f64());
    out.finish(report)
}
