use std::sync::Arc;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::quadratic::{csv_io, fmt_num, DESCENT_SLACK};
use super::report::{
    Comparison, ComparisonRow, DivergenceSummary, OutputDir, RetrainSummary, RunReport, RunStatus, RunSummary,
};
use super::worker_pool;
use crate::diagnostics::descent_check;
use crate::error::{Error, Result};
use crate::solvers::{run, SolverKind, Trajectory};
use crate::supernet::{discretize, gen_task, retrain, softmax_rows, supernet_objective, Genotype, SyntheticTask};

/// Search trajectory CSV: losses, then the softmax weight of every op on
/// every edge.
fn trajectory_csv(traj: &Trajectory, cfg: &ExperimentConfig) -> Result<String> {
    let cell = &cfg.search.cell;
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["t", "L_train", "L_val", "L"].iter().map(|s| s.to_string()).collect();
    for e in 0..cell.edges {
        for k in 0..cell.ops.len() {
            header.push(format!("alpha_{e}_{k}"));
        }
    }
    out.write_record(&header).map_err(csv_io)?;
    for rec in &traj.records {
        let mut row = vec![
            rec.t.to_string(),
            fmt_num(rec.train_loss),
            fmt_num(rec.val_loss),
            fmt_num(rec.lagrangian),
        ];
        for p in softmax_rows(&rec.alpha, cell)?.into_iter().flatten() {
            row.push(fmt_num(p));
        }
        out.write_record(&row).map_err(csv_io)?;
    }
    String::from_utf8(out.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .map_err(|e| Error::config(e.to_string()))
}

fn recovery(teacher: &Genotype, found: &Genotype) -> Vec<bool> {
    teacher.edges.iter().zip(&found.edges).map(|(a, b)| a == b).collect()
}

fn retrain_summary(cfg: &ExperimentConfig, g: &Genotype, task: &SyntheticTask, seed: u64) -> Result<RetrainSummary> {
    let r = retrain(g, task, cfg.retrain.epochs, cfg.retrain.lr, seed)?;
    Ok(RetrainSummary {
        epochs: cfg.retrain.epochs,
        lr: cfg.retrain.lr,
        train_mse: r.train_mse,
        val_mse: r.val_mse,
        test_mse: r.test_mse,
    })
}

struct SearchOutcome {
    summary: RunSummary,
    csv: Option<String>,
}

fn failed(mut summary: RunSummary, e: Error) -> RunSummary {
    summary.status = match e {
        Error::Divergence(_) | Error::RetrainDiverged { .. } => RunStatus::Diverged,
        _ => RunStatus::Failed,
    };
    if let Error::Divergence(d) = &e {
        summary.divergence = Some(DivergenceSummary {
            step: d.step,
            norm: d.norm,
            bound: d.bound,
        });
    }
    summary.error = Some(e.to_string());
    summary
}

/// Search with `solver` on the task of `seed`, then discretize and retrain.
fn search_one(
    cfg: &ExperimentConfig,
    solver: SolverKind,
    task: &Arc<SyntheticTask>,
    seed: u64,
) -> Result<SearchOutcome> {
    let obj = supernet_objective(&cfg.search.cell, task.clone())?;
    let mut summary = RunSummary::new(seed, solver);
    summary.teacher = Some(task.teacher.clone());
    let init = obj.init_state(cfg.search.init_gain, seed);
    let traj = match run(solver, &obj, init, &cfg.hyper, &cfg.stop, cfg.log_every) {
        Ok(t) => t,
        Err(e @ Error::Divergence(_)) => {
            return Ok(SearchOutcome {
                summary: failed(summary, e),
                csv: None,
            })
        }
        Err(e) => return Err(e),
    };
    let last = traj.last();
    summary.steps = Some(last.t);
    summary.stop_reason = Some(traj.stop_reason);
    summary.train_loss = Some(last.train_loss);
    summary.val_loss = Some(last.val_loss);
    summary.alpha_softmax = Some(softmax_rows(&last.alpha, &cfg.search.cell)?);
    if cfg.log_every == 1 {
        summary.descent_violations = Some(descent_check(&traj, &obj, &cfg.hyper, DESCENT_SLACK)?.len());
    }
    let csv = trajectory_csv(&traj, cfg)?;
    let genotype = discretize(&last.alpha, &cfg.search.cell, cfg.search.include_zero)?;
    summary.recovered = Some(recovery(&task.teacher, &genotype));
    summary.genotype = Some(genotype.clone());
    match retrain_summary(cfg, &genotype, task, seed) {
        Ok(r) => summary.retrain = Some(r),
        Err(e @ Error::RetrainDiverged { .. }) => summary = failed(summary, e),
        Err(e) => return Err(e),
    }
    Ok(SearchOutcome {
        summary,
        csv: Some(csv),
    })
}

fn task_for(cfg: &ExperimentConfig, seed: u64) -> Result<Arc<SyntheticTask>> {
    let t = &cfg.search.task;
    Ok(Arc::new(gen_task(
        seed,
        &cfg.search.cell,
        t.n_train,
        t.n_val,
        t.n_test,
        t.noise_std,
    )?))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn compare(primary: &[RunSummary], baseline: &[RunSummary], p: SolverKind, b: SolverKind) -> Comparison {
    let rows: Vec<ComparisonRow> = primary
        .iter()
        .zip(baseline)
        .map(|(x, y)| ComparisonRow {
            seed: x.seed,
            primary_val_mse: x.retrain.map(|r| r.val_mse),
            baseline_val_mse: y.retrain.map(|r| r.val_mse),
            primary_test_mse: x.retrain.map(|r| r.test_mse),
            baseline_test_mse: y.retrain.map(|r| r.test_mse),
        })
        .collect();
    let paired: Vec<&ComparisonRow> = rows
        .iter()
        .filter(|r| r.primary_val_mse.is_some() && r.baseline_val_mse.is_some())
        .collect();
    Comparison {
        primary: p,
        baseline: b,
        mean_primary_val_mse: mean(paired.iter().filter_map(|r| r.primary_val_mse)),
        mean_baseline_val_mse: mean(paired.iter().filter_map(|r| r.baseline_val_mse)),
        mean_primary_test_mse: mean(paired.iter().filter_map(|r| r.primary_test_mse)),
        mean_baseline_test_mse: mean(paired.iter().filter_map(|r| r.baseline_test_mse)),
        rows,
    }
}

fn comparison_csv(c: &Comparison) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    for row in &c.rows {
        out.serialize(row).map_err(csv_io)?;
    }
    String::from_utf8(out.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .map_err(|e| Error::config(e.to_string()))
}

fn genotype_json(g: &Genotype) -> Result<String> {
    Ok(serde_json::to_string_pretty(g)? + "\n")
}

/// Searches, discretizes and retrains once per seed; with a baseline solver
/// configured, repeats the pipeline on the same tasks and tabulates both.
pub fn run_search(cfg: &ExperimentConfig) -> Result<RunReport> {
    if cfg.kind != ExperimentKind::Search {
        return Err(Error::config("run_search needs kind = search"));
    }
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut out = OutputDir::create(cfg.out_dir()?)?;
    let arms: Vec<(SolverKind, bool)> = std::iter::once((cfg.solver, false))
        .chain(cfg.search.baseline.map(|b| (b, true)))
        .collect();
    let jobs: Vec<(u64, SolverKind, bool)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| arms.iter().map(move |&(k, b)| (s, k, b)))
        .collect();
    let results: Vec<Result<SearchOutcome>> = worker_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(seed, solver, _)| search_one(cfg, solver, &task_for(cfg, seed)?, seed))
            .collect()
    });

    let mut report = RunReport::new(cfg);
    for ((seed, _, baseline), res) in jobs.into_iter().zip(results) {
        let o = res?;
        let prefix = if baseline { "baseline_" } else { "" };
        if let Some(csv) = &o.csv {
            out.write(&format!("{prefix}trajectory_seed{seed}.csv"), csv.as_bytes())?;
        }
        if let Some(g) = &o.summary.genotype {
            out.write(
                &format!("{prefix}genotype_seed{seed}.json"),
                genotype_json(g)?.as_bytes(),
            )?;
        }
        if baseline {
            report.baseline_runs.push(o.summary);
        } else {
            report.runs.push(o.summary);
        }
    }
    if let Some(b) = cfg.search.baseline {
        let c = compare(&report.runs, &report.baseline_runs, cfg.solver, b);
        out.write("comparison.csv", comparison_csv(&c)?.as_bytes())?;
        report.comparison = Some(c);
    }
    report.wall_clock_seconds = cfg.record_wall_clock.then(|| start.elapsed().as_secs_f64());
    out.finish(report)
}

/// Retrains a given genotype on each seed's task and reports test MSE.
pub fn run_retrain(cfg: &ExperimentConfig) -> Result<RunReport> {
    if cfg.kind != ExperimentKind::Retrain {
        return Err(Error::config("run_retrain needs kind = retrain"));
    }
    cfg.validate()?;
    let start = std::time::Instant::now();
    let genotype = cfg.genotype()?;
    let mut out = OutputDir::create(cfg.out_dir()?)?;
    out.write("genotype.json", genotype_json(&genotype)?.as_bytes())?;
    let results: Vec<Result<RunSummary>> = worker_pool()?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let task = task_for(cfg, seed)?;
                let mut s = RunSummary::new(seed, cfg.solver);
                s.recovered = Some(recovery(&task.teacher, &genotype));
                s.teacher = Some(task.teacher.clone());
                s.genotype = Some(genotype.clone());
                match retrain_summary(cfg, &genotype, &task, seed) {
                    Ok(r) => s.retrain = Some(r),
                    Err(e @ Error::RetrainDiverged { .. }) => s = failed(s, e),
                    Err(e) => return Err(e),
                }
                Ok(s)
            })
            .collect()
    });
    let mut report = RunReport::new(cfg);
    for r in results {
        report.runs.push(r?);
    }
    report.wall_clock_seconds = cfg.record_wall_clock.then(|| start.elapsed().as_secs_f64());
    out.finish(report)
}
