//! Searches a two-edge supernet against a random teacher, discretizes the
//! architecture weights and retrains the chosen cell.
//!
//! cargo run --release --example toy_search -- [seed]

use std::sync::Arc;

use rarts::objective::HyperParams;
use rarts::solvers::{run, SolverKind, StopRule};
use rarts::supernet::{discretize, gen_task, retrain, softmax_rows, supernet_objective, CellSpec, OpKind};

fn main() -> rarts::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let cell = CellSpec::new(
        2,
        8,
        vec![OpKind::Zero, OpKind::Identity, OpKind::LinearTanh, OpKind::LinearRelu],
    )?;
    let task = Arc::new(gen_task(seed, &cell, 256, 256, 256, 0.0)?);
    println!("teacher: {:?}", task.teacher.edges);

    let net = supernet_objective(&cell, task.clone())?;
    let hp = HyperParams::new(1.0, 1.0, 0.1);
    let traj = run(
        SolverKind::Rarts,
        &net,
        net.init_state(0.3, seed),
        &hp,
        &StopRule::steps(2000),
        500,
    )?;
    for r in &traj.records {
        println!("t={:>5} L_train={:.3e} L_val={:.3e}", r.t, r.train_loss, r.val_loss);
    }

    let alpha = &traj.last().alpha;
    for (e, row) in softmax_rows(alpha, &cell)?.iter().enumerate() {
        let probs: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
        println!("edge {e}: [{}]", probs.join(", "));
    }
    let found = discretize(alpha, &cell, false)?;
    println!(
        "found:   {:?} (teacher recovered: {})",
        found.edges,
        found == task.teacher
    );

    let out = retrain(&found, &task, 20_000, 0.1, seed)?;
    println!(
        "retrained: train {:.3e} val {:.3e} test {:.3e}",
        out.train_mse, out.val_mse, out.test_mse
    );
    Ok(())
}
