//! All four solvers on the quadratic model from the same start. DARTS-1 is
//! drawn to the spurious point (2, 2); the others head for alpha = w.

use rarts::objective::{HyperParams, MixedDerivative, QuadraticModel};
use rarts::solvers::{run, SearchState, SolverKind, StopRule};

fn main() -> rarts::Result<()> {
    let model = QuadraticModel::new();
    let stop = StopRule::steps(10_000);
    let base = HyperParams::new(10.0, 10.0, 0.01);

    let mut fd = base.clone().with_xi(0.01);
    fd.mixed_derivative = MixedDerivative::FiniteDifference;
    let runs = [
        ("rarts", SolverKind::Rarts, base.clone()),
        ("darts1", SolverKind::Darts1, base.clone()),
        ("darts2 (exact)", SolverKind::Darts2, base.clone().with_xi(0.01)),
        ("darts2 (fd)", SolverKind::Darts2, fd),
        ("darts2 xi=0.5", SolverKind::Darts2, base.clone().with_xi(0.5)),
        ("milenas", SolverKind::Milenas, base.clone()),
    ];
    for (label, kind, hp) in runs {
        let (w, y, alpha) = model.point(-2.0, 0.0, 2.0);
        let traj = run(kind, &model, SearchState::new(w, y, alpha)?, &hp, &stop, 10_000)?;
        let last = traj.last();
        println!("{label:<15} alpha={:+.5} w={:+.5}", last.alpha.item(), last.w.item());
    }
    Ok(())
}
