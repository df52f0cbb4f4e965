use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, ExperimentKind};
use super::plot::{render_svg, PlotSpec, QUADRATIC_HEADER};
use super::report::{DivergenceSummary, FinalPoint, OutputDir, RunReport, RunStatus, RunSummary};
use crate::diagnostics::{descent_check, equilibrium_residual, quadratic_equilibrium};
use crate::error::{Error, Result};
use crate::objective::{HyperParams, QuadraticModel};
use crate::solvers::{run, SearchState, SolverKind, StopRule, Trajectory};

/// Slack for counting Lagrangian increases.
pub const DESCENT_SLACK: f64 = 1e-12;

/// Finished quadratic run plus the files it should produce.
pub struct QuadraticOutcome {
    pub summary: RunSummary,
    pub csv: Option<String>,
    pub svg: Option<String>,
}

pub fn initial_state(cfg: &ExperimentConfig, model: &QuadraticModel, seed: u64) -> SearchState {
    let q = &cfg.quadratic;
    let mut shift = [0.0; 3];
    if q.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &mut shift {
            *s = rng.gen_range(-q.jitter..=q.jitter);
        }
    }
    let (w, y, a) = model.point(q.w0 + shift[1], q.y0 + shift[2], q.alpha0 + shift[0]);
    SearchState::new(w, y, a).expect("quadratic layouts agree")
}

fn trajectory_csv(traj: &Trajectory, model: &QuadraticModel, hp: &HyperParams, log_every: u64) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(QUADRATIC_HEADER).map_err(csv_io)?;
    let last = traj.last().t;
    for rec in traj.records.iter().filter(|r| r.t % log_every == 0 || r.t == last) {
        let r = equilibrium_residual(model, &rec.state(), hp)?;
        let row = [
            rec.t as f64,
            rec.alpha.item(),
            rec.w.item(),
            rec.y.item(),
            rec.train_loss,
            rec.val_loss,
            rec.lagrangian,
            r.r_w,
            r.r_y,
            r.r_alpha,
        ];
        out.write_record(row.iter().map(|v| fmt_num(*v))).map_err(csv_io)?;
    }
    String::from_utf8(out.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .map_err(|e| Error::config(e.to_string()))
}

/// Shortest round-trip form; scientific notation for very small or large values.
pub(crate) fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// One quadratic run at `(hp.lambda, hp.beta)` from the configured start.
pub fn quadratic_run(
    cfg: &ExperimentConfig,
    solver: SolverKind,
    hp: &HyperParams,
    stop: &StopRule,
    seed: u64,
    plot: bool,
) -> Result<QuadraticOutcome> {
    let model = QuadraticModel::new();
    let init = initial_state(cfg, &model, seed);
    let mut summary = RunSummary::new(seed, solver);
    match quadratic_equilibrium(hp.lambda, hp.beta) {
        Ok(eq) => summary.equilibrium = Some(eq),
        Err(e) => summary.equilibrium_error = Some(e.to_string()),
    }
    // Every step is kept so that descent can be certified; the CSV is thinned.
    let traj = match run(solver, &model, init, hp, stop, 1) {
        Ok(t) => t,
        Err(Error::Divergence(d)) => {
            summary.status = RunStatus::Diverged;
            summary.error = Some(Error::Divergence(d.clone()).to_string());
            summary.divergence = Some(DivergenceSummary {
                step: d.step,
                norm: d.norm,
                bound: d.bound,
            });
            let s = &d.last_state;
            summary.steps = Some(s.t);
            summary.point = Some(FinalPoint {
                alpha: s.alpha.item(),
                w: s.w.item(),
                y: s.y.item(),
            });
            return Ok(QuadraticOutcome {
                summary,
                csv: None,
                svg: None,
            });
        }
        Err(e) => return Err(e),
    };
    let last = traj.last();
    summary.steps = Some(last.t);
    summary.stop_reason = Some(traj.stop_reason);
    summary.point = Some(FinalPoint {
        alpha: last.alpha.item(),
        w: last.w.item(),
        y: last.y.item(),
    });
    summary.train_loss = Some(last.train_loss);
    summary.val_loss = Some(last.val_loss);
    summary.residual = Some(equilibrium_residual(&model, &last.state(), hp)?);
    summary.descent_violations = Some(descent_check(&traj, &model, hp, DESCENT_SLACK)?.len());

    let csv = trajectory_csv(&traj, &model, hp, cfg.log_every)?;
    let svg = if plot {
        let points: Vec<(f64, f64)> = super::plot::parse_phase_points(&csv)?;
        let spec = PlotSpec {
            title: Some(format!("{solver}: lambda={}, beta={}", hp.lambda, hp.beta)),
            equilibrium: summary.equilibrium.map(|e| (e.alpha, e.w)),
        };
        Some(render_svg(&points, &spec)?)
    } else {
        None
    };
    Ok(QuadraticOutcome {
        summary,
        csv: Some(csv),
        svg,
    })
}

/// Runs the configured solver on the quadratic model once per seed.
pub fn run_quadratic(cfg: &ExperimentConfig) -> Result<RunReport> {
    if cfg.kind != ExperimentKind::Quadratic {
        return Err(Error::config("run_quadratic needs kind = quadratic"));
    }
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut out = OutputDir::create(cfg.out_dir()?)?;
    let mut report = RunReport::new(cfg);
    for &seed in &cfg.seeds {
        let o = quadratic_run(cfg, cfg.solver, &cfg.hyper, &cfg.stop, seed, cfg.quadratic.plot)?;
        if let Some(csv) = &o.csv {
            out.write(&format!("trajectory_seed{seed}.csv"), csv.as_bytes())?;
        }
        if let Some(svg) = &o.svg {
            out.write(&format!("phase_seed{seed}.svg"), svg.as_bytes())?;
        }
        report.runs.push(o.summary);
    }
    report.wall_clock_seconds = cfg.record_wall_clock.then(|| start.elapsed().as_secs_f64());
    out.finish(report)
}
