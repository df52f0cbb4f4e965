//! Estimates the gradient Lipschitz constants of the quadratic model, turns
//! them into step-size bounds and checks that the Lagrangian never rises
//! along a run at half those bounds.

use rarts::diagnostics::{descent_check, estimate_lipschitz, step_size_bounds, SampleBox};
use rarts::objective::{HyperParams, QuadraticModel};
use rarts::solvers::{run, SearchState, SolverKind, StopRule};

fn main() -> rarts::Result<()> {
    let model = QuadraticModel::new();
    let (w, y, alpha) = model.point(-2.0, 0.0, 2.0);
    let start = SearchState::new(w, y, alpha)?;

    for n in [10, 100, 1000, 10_000] {
        let est = estimate_lipschitz(&model, &start, &SampleBox::uniform(-5.0, 5.0), n, 0)?;
        println!("{n:>6} samples: L1 >= {:.4}  L2 >= {:.4}", est.l1, est.l2);
    }

    // Exact Hessian norms: |[[0,1],[1,0]]| = 1 and |[[2,-2],[-2,2]]| = 4.
    let hp = HyperParams::new(10.0, 10.0, 0.01);
    let b = step_size_bounds(1.0, 4.0, &hp)?;
    println!("c1={:.5} c2={:.5} c3={:.5}", b.c1, b.c2, b.c3);
    println!("eta=0.01 admitted: {}", b.admits(&hp));

    let half = b.scaled_rates(&hp, 0.5);
    let traj = run(SolverKind::Rarts, &model, start, &half, &StopRule::steps(10_000), 1)?;
    let violations = descent_check(&traj, &model, &half, 1e-12)?;
    let last = traj.last();
    println!(
        "half-bound run: {} violations, final alpha={:.5} w={:.5} L={:.6}",
        violations.len(),
        last.alpha.item(),
        last.w.item(),
        last.lagrangian
    );
    Ok(())
}
