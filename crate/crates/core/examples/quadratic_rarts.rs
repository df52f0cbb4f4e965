//! RARTS on the two-variable quadratic model, compared with its closed-form
//! equilibrium.
//!
//! cargo run --example quadratic_rarts -- [lambda] [beta]

use rarts::diagnostics::{equilibrium_residual, quadratic_coupled_limit, quadratic_equilibrium};
use rarts::objective::{HyperParams, QuadraticModel};
use rarts::solvers::{run, SearchState, SolverKind, StopRule};

fn main() -> rarts::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<f64>().expect("numeric argument"));
    let lambda = args.next().unwrap_or(10.0);
    let beta = args.next().unwrap_or(10.0);

    let model = QuadraticModel::new();
    let (w, y, alpha) = model.point(-2.0, 0.0, 2.0);
    let hp = HyperParams::new(lambda, beta, 0.01);
    let traj = run(
        SolverKind::Rarts,
        &model,
        SearchState::new(w, y, alpha)?,
        &hp,
        &StopRule::steps(10_000),
        1000,
    )?;

    println!("{:>6} {:>10} {:>10} {:>10} {:>12}", "t", "alpha", "w", "y", "L");
    for r in &traj.records {
        println!(
            "{:>6} {:>10.6} {:>10.6} {:>10.6} {:>12.6e}",
            r.t,
            r.alpha.item(),
            r.w.item(),
            r.y.item(),
            r.lagrangian
        );
    }

    let res = equilibrium_residual(&model, &traj.final_state(), &hp)?;
    println!(
        "residuals: r_w={:.2e} r_y={:.2e} r_alpha={:.2e}",
        res.r_w, res.r_y, res.r_alpha
    );
    match quadratic_equilibrium(lambda, beta) {
        Ok(eq) => println!("closed form: alpha={:.6} w={:.6} y={:.6}", eq.alpha, eq.w, eq.y),
        Err(e) => println!("closed form: {e}"),
    }
    if let Ok((a, w)) = quadratic_coupled_limit(lambda) {
        println!("beta -> inf limit: alpha={a:.6} w={w:.6}");
    }
    Ok(())
}
