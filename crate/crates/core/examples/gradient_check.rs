//! Tape gradients against central differences: a hand-built expression, the
//! quadratic losses and the supernet training loss.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rarts::autodiff::{grad_check, Bindings, Tensor};
use rarts::objective::ParamVector;
use rarts::supernet::{gen_task, init_weights, supernet_objective, CellSpec};

fn main() -> rarts::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // f(x, W) = mean(tanh(x W)²)
    let mut point = Bindings::new();
    point.insert(
        "x".into(),
        Tensor::new(3, 4, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()),
    );
    point.insert(
        "W".into(),
        Tensor::new(4, 2, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()),
    );
    let r = grad_check(
        |t| {
            let x = t.leaf("x");
            let w = t.leaf("W");
            let h = t.matmul(x, w);
            let h = t.tanh(h);
            let s = t.squared_norm(h);
            t.scale(s, 1.0 / 6.0)
        },
        &point,
        1e-5,
    )?;
    println!(
        "tanh expression: max rel error {:.2e} over {} coordinates",
        r.max_rel_error, r.coordinates
    );

    let mut point = Bindings::new();
    for name in ["w", "y", "alpha"] {
        point.insert(name.into(), Tensor::scalar(rng.gen_range(-3.0..3.0)));
    }
    let r = grad_check(
        |t| {
            let w = t.leaf("w");
            let a = t.leaf("alpha");
            let d = t.sub(w, a);
            t.mul(d, d)
        },
        &point,
        1e-5,
    )?;
    println!("L_train = (w - alpha)^2: max rel error {:.2e}", r.max_rel_error);

    let cell = CellSpec::default();
    let task = Arc::new(gen_task(3, &cell, 32, 32, 8, 0.0)?);
    let net = supernet_objective(&cell, task)?;
    let mut point = Bindings::new();
    init_weights(cell.weight_layout(), cell.feature_dim, 1.0, 9).bind_into("", &mut point);
    let alpha: Vec<f64> = (0..cell.arch_layout().len())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    ParamVector::from_values(cell.arch_layout(), alpha)?.bind_into("", &mut point);
    let r = grad_check(|t| net.record_loss(t, false), &point, 1e-5)?;
    println!(
        "supernet L_train: max rel error {:.2e} over {} coordinates (worst {:?})",
        r.max_rel_error, r.coordinates, r.worst
    );
    Ok(())
}
