//! Writes an (alpha, w) phase portrait of RARTS and DARTS-1 trajectories as
//! standalone SVG files.

use rarts::cli::{parse_phase_points, quadratic_run, render_svg, ExperimentConfig, ExperimentKind, PlotSpec};
use rarts::diagnostics::quadratic_equilibrium;
use rarts::solvers::SolverKind;

fn main() -> rarts::Result<()> {
    let cfg = ExperimentConfig::default_for(ExperimentKind::Quadratic);
    let eq = quadratic_equilibrium(cfg.hyper.lambda, cfg.hyper.beta)?;
    let dir = std::env::temp_dir();
    for solver in [SolverKind::Rarts, SolverKind::Darts1] {
        let outcome = quadratic_run(&cfg, solver, &cfg.hyper, &cfg.stop, 0, false)?;
        let points = parse_phase_points(outcome.csv.as_deref().expect("run did not diverge"))?;
        let spec = PlotSpec {
            title: Some(format!("{solver}: lambda = beta = 10")),
            equilibrium: Some((eq.alpha, eq.w)),
        };
        let path = dir.join(format!("phase_{solver}.svg"));
        std::fs::write(&path, render_svg(&points, &spec)?)?;
        let last = points.last().expect("non-empty trajectory");
        println!(
            "{solver}: {} points, ends at ({:.4}, {:.4}) -> {}",
            points.len(),
            last.0,
            last.1,
            path.display()
        );
    }
    Ok(())
}
