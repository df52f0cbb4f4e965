use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use proptest::prelude::*;

use rarts::diagnostics::{equilibrium_residual, quadratic_equilibrium};
use rarts::objective::{BilevelObjective, HyperParams, MixedDerivative, ParamVector, QuadraticModel};
use rarts::solvers::{
    darts2_alpha_direction, milenas_step, rarts_alpha_direction, rarts_step, rarts_weight_update, run, step,
    SearchState, SolverKind, StopRule,
};
use rarts::supernet::{gen_task, supernet_objective, CellSpec};
use rarts::Error;

/// Wraps an objective and logs every call with its scalar arguments.
struct Probe<O> {
    inner: O,
    calls: Mutex<Vec<(&'static str, f64, f64)>>,
    mixed: AtomicUsize,
}

impl<O> Probe<O> {
    fn new(inner: O) -> Self {
        Probe {
            inner,
            calls: Mutex::new(Vec::new()),
            mixed: AtomicUsize::new(0),
        }
    }

    fn log(&self, name: &'static str, v: &ParamVector, a: &ParamVector) {
        self.calls.lock().unwrap().push((name, v.values()[0], a.values()[0]));
    }

    fn gradient_calls(&self) -> Vec<(&'static str, f64, f64)> {
        self.calls
            .lock()
            .unwrap()
            .iter()
            .copied()
            .filter(|c| c.0.starts_with("grad"))
            .collect()
    }
}

impl<O: BilevelObjective> BilevelObjective for Probe<O> {
    fn eval_train(&self, w: &ParamVector, a: &ParamVector) -> rarts::Result<f64> {
        self.log("eval_train", w, a);
        self.inner.eval_train(w, a)
    }
    fn eval_val(&self, y: &ParamVector, a: &ParamVector) -> rarts::Result<f64> {
        self.log("eval_val", y, a);
        self.inner.eval_val(y, a)
    }
    fn grad_w_train(&self, w: &ParamVector, a: &ParamVector) -> rarts::Result<ParamVector> {
        self.log("grad_w_train", w, a);
        self.inner.grad_w_train(w, a)
    }
    fn grad_alpha_train(&self, w: &ParamVector, a: &ParamVector) -> rarts::Result<ParamVector> {
        self.log("grad_alpha_train", w, a);
        self.inner.grad_alpha_train(w, a)
    }
    fn grad_y_val(&self, y: &ParamVector, a: &ParamVector) -> rarts::Result<ParamVector> {
        self.log("grad_y_val", y, a);
        self.inner.grad_y_val(y, a)
    }
    fn grad_alpha_val(&self, y: &ParamVector, a: &ParamVector) -> rarts::Result<ParamVector> {
        self.log("grad_alpha_val", y, a);
        self.inner.grad_alpha_val(y, a)
    }
    fn mixed_train_apply(
        &self,
        w: &ParamVector,
        a: &ParamVector,
        v: &ParamVector,
    ) -> Option<rarts::Result<ParamVector>> {
        self.mixed.fetch_add(1, Ordering::SeqCst);
        self.inner.mixed_train_apply(w, a, v)
    }
}

fn quad_state(w: f64, y: f64, a: f64) -> SearchState {
    let (w, y, a) = QuadraticModel::new().point(w, y, a);
    SearchState::new(w, y, a).unwrap()
}

#[test]
fn rarts_sweep_is_gauss_seidel() {
    let probe = Probe::new(QuadraticModel::new());
    let hp = HyperParams::new(2.0, 3.0, 0.01).with_rates(0.01, 0.02, 0.03);
    let (w0, y0, a0) = (-2.0, 0.5, 2.0);
    let next = rarts_step(&quad_state(w0, y0, a0), &probe, &hp).unwrap();

    let w1 = w0 - 0.01 * (2.0 * (2.0 * w0 - 2.0 * a0) + 3.0 * (w0 - y0));
    let y1 = y0 - 0.02 * (a0 + 3.0 * (y0 - w1));
    let a1 = a0 - 0.03 * (2.0 * (-2.0 * w1 + 2.0 * a0) + (y1 - 2.0));
    assert_eq!(
        probe.gradient_calls(),
        [
            ("grad_w_train", w0, a0),
            ("grad_y_val", y0, a0),
            ("grad_alpha_train", w1, a0),
            ("grad_alpha_val", y1, a0),
        ]
    );
    assert!((next.w.item() - w1).abs() < 1e-15);
    assert!((next.y.item() - y1).abs() < 1e-15);
    assert!((next.alpha.item() - a1).abs() < 1e-15);
    assert_eq!(next.t, 1);
}

#[test]
fn rarts_never_asks_for_the_mixed_derivative() {
    let probe = Probe::new(QuadraticModel::new());
    let hp = HyperParams::new(10.0, 10.0, 0.01).with_xi(0.01);
    run(
        SolverKind::Rarts,
        &probe,
        quad_state(-2.0, 0.0, 2.0),
        &hp,
        &StopRule::steps(500),
        1,
    )
    .unwrap();
    assert_eq!(probe.mixed.load(Ordering::SeqCst), 0);
    run(
        SolverKind::Milenas,
        &probe,
        quad_state(-2.0, 0.0, 2.0),
        &hp,
        &StopRule::steps(50),
        1,
    )
    .unwrap();
    run(
        SolverKind::Darts1,
        &probe,
        quad_state(-2.0, 0.0, 2.0),
        &hp,
        &StopRule::steps(50),
        1,
    )
    .unwrap();
    assert_eq!(probe.mixed.load(Ordering::SeqCst), 0);

    run(
        SolverKind::Darts2,
        &probe,
        quad_state(-2.0, 0.0, 2.0),
        &hp,
        &StopRule::steps(50),
        1,
    )
    .unwrap();
    assert_eq!(probe.mixed.load(Ordering::SeqCst), 50);
}

#[test]
fn darts2_finite_difference_falls_back_without_exact_product() {
    let probe = Probe::new(QuadraticModel::without_mixed_derivative());
    let hp = HyperParams::new(1.0, 0.0, 0.01).with_xi(0.01);
    let s = quad_state(0.3, 0.3, -0.7);
    let fd = darts2_alpha_direction(&probe, &hp, &s.w, &s.alpha).unwrap();
    let exact = darts2_alpha_direction(&QuadraticModel::new(), &hp, &s.w, &s.alpha).unwrap();
    assert_eq!(probe.mixed.load(Ordering::SeqCst), 1);
    assert!((fd.item() - exact.item()).abs() <= 1e-9 * exact.item().abs().max(1.0));
}

#[test]
fn divergence_reports_last_good_state() {
    let hp = HyperParams::new(10.0, 10.0, 0.5);
    let stop = StopRule {
        divergence_bound: 1e3,
        ..StopRule::steps(1000)
    };
    match run(
        SolverKind::Rarts,
        &QuadraticModel::new(),
        quad_state(-2.0, 0.0, 2.0),
        &hp,
        &stop,
        1,
    ) {
        Err(Error::Divergence(d)) => {
            assert!(d.norm > 1e3);
            assert_eq!(d.last_state.t + 1, d.step);
            let s = &d.last_state;
            assert!(s.w.norm().max(s.y.norm()).max(s.alpha.norm()) <= 1e3);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn runs_are_deterministic() {
    let cell = CellSpec::new(2, 4, CellSpec::default().ops).unwrap();
    let task = Arc::new(gen_task(11, &cell, 24, 24, 8, 0.1).unwrap());
    let net = supernet_objective(&cell, task).unwrap();
    let hp = HyperParams::new(1.0, 1.0, 0.05);
    for kind in SolverKind::ALL {
        let hp = hp.clone().with_xi(0.01);
        let a = run(kind, &net, net.init_state(0.5, 3), &hp, &StopRule::steps(30), 1).unwrap();
        let b = run(kind, &net, net.init_state(0.5, 3), &hp, &StopRule::steps(30), 1).unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn milenas_is_rarts_without_penalty_and_resynced_weights() {
    let cell = CellSpec::new(2, 3, CellSpec::default().ops).unwrap();
    let task = Arc::new(gen_task(2, &cell, 16, 16, 4, 0.0).unwrap());
    let net = supernet_objective(&cell, task).unwrap();
    let hp = HyperParams::new(0.7, 0.0, 0.05);
    for seed in 0..5 {
        let state = net.init_state(1.0, seed);
        let (w_next, _) = rarts_weight_update(&state, &net, &hp).unwrap();
        let via_rarts = rarts_alpha_direction(&net, &hp, &w_next, &w_next, &state.alpha).unwrap();
        let expected = state.alpha.axpy(-hp.eta_alpha, &via_rarts).unwrap();
        let m = milenas_step(&state, &net, &hp).unwrap();
        assert_eq!(m.w, w_next);
        assert_eq!(m.alpha, expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equilibrium_is_a_fixed_point(lambda in 0.3f64..50.0, beta in 0.5f64..50.0) {
        let d = 4.0 * lambda * beta - beta - 2.0 * lambda;
        prop_assume!(d.abs() > 0.5);
        let eq = quadratic_equilibrium(lambda, beta).unwrap();
        let hp = HyperParams::new(lambda, beta, 1e-3);
        let s = quad_state(eq.w, eq.y, eq.alpha);
        let scale = 1.0 + eq.alpha.abs() + eq.w.abs();
        let r = equilibrium_residual(&QuadraticModel::new(), &s, &hp).unwrap();
        prop_assert!(r.max() < 1e-9 * scale * (lambda + beta));
        let next = rarts_step(&s, &QuadraticModel::new(), &hp).unwrap();
        prop_assert!((next.w.item() - eq.w).abs() < 1e-12 * scale * (lambda + beta));
        prop_assert!((next.y.item() - eq.y).abs() < 1e-12 * scale * (lambda + beta));
        prop_assert!((next.alpha.item() - eq.alpha).abs() < 1e-12 * scale * (lambda + beta));
    }

    #[test]
    fn darts2_fd_matches_exact_on_the_quadratic(w in -5.0f64..5.0, a in -5.0f64..5.0, xi in 1e-3f64..0.5) {
        let q = QuadraticModel::new();
        let mut hp = HyperParams::new(1.0, 0.0, 0.01).with_xi(xi);
        let s = quad_state(w, w, a);
        let exact = darts2_alpha_direction(&q, &hp, &s.w, &s.alpha).unwrap().item();
        hp.mixed_derivative = MixedDerivative::FiniteDifference;
        let fd = darts2_alpha_direction(&q, &hp, &s.w, &s.alpha).unwrap().item();
        prop_assert!((fd - exact).abs() <= 1e-9 * exact.abs().max(1.0));
    }

    #[test]
    fn every_solver_step_is_pure(w in -3.0f64..3.0, y in -3.0f64..3.0, a in -3.0f64..3.0) {
        let q = QuadraticModel::new();
        let hp = HyperParams::new(2.0, 1.0, 0.01).with_xi(0.05);
        let s = quad_state(w, y, a);
        for kind in SolverKind::ALL {
            prop_assert_eq!(step(kind, &s, &q, &hp).unwrap(), step(kind, &s, &q, &hp).unwrap());
        }
    }
}
