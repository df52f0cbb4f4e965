//! Checks derived from the descent argument for the relaxed Lagrangian.
//!
//! If `∇L_val` is `L1`-Lipschitz in `(y, alpha)` and `∇L_train` is
//! `L2`-Lipschitz in `(w, alpha)`, then with `L3 = max(L1, L2)` the Lagrangian
//! decreases along RARTS iterates whenever
//!
//! ```text
//! eta_y     < c1 = 1/2 · [L1/2 + beta/2 + (1 + lambda)·L3/2]^-1
//! eta_w     < c2 = 1/2 · [L2/2 + beta/2 + (1 + lambda)·L3/2]^-1
//! eta_alpha < c3 = 1 / ((1 + lambda)·L3)
//! ```
//!
//! and limit points satisfy the equilibrium system
//!
//! ```text
//! lambda·∇_w L_train(w, alpha) + beta·(w - y)      = 0
//! ∇_y L_val(y, alpha) + beta·(y - w)               = 0
//! lambda·∇_alpha L_train(w, alpha) + ∇_alpha L_val(y, alpha) = 0
//! ```

use num_rational::Ratio;
use num_traits::{Num, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{eval_lagrangian, BilevelObjective, HyperParams, ParamVector};
use crate::solvers::{SearchState, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeBounds {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl StepSizeBounds {
    /// Whether every rate in `hp` lies strictly below its bound.
    pub fn admits(&self, hp: &HyperParams) -> bool {
        hp.eta_y < self.c1 && hp.eta_w < self.c2 && hp.eta_alpha < self.c3
    }

    /// `hp` with each rate set to `fraction` of its bound.
    pub fn scaled_rates(&self, hp: &HyperParams, fraction: f64) -> HyperParams {
        hp.clone()
            .with_rates(fraction * self.c2, fraction * self.c1, fraction * self.c3)
    }
}

pub fn step_size_bounds(l1: f64, l2: f64, hp: &HyperParams) -> Result<StepSizeBounds> {
    if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
        return Err(Error::config(format!(
            "Lipschitz constants must be positive, got L1={l1}, L2={l2}"
        )));
    }
    let l3 = l1.max(l2);
    let coupling = (1.0 + hp.lambda) * l3 / 2.0;
    Ok(StepSizeBounds {
        l1,
        l2,
        l3,
        c1: 0.5 / (l1 / 2.0 + hp.beta / 2.0 + coupling),
        c2: 0.5 / (l2 / 2.0 + hp.beta / 2.0 + coupling),
        c3: 1.0 / ((1.0 + hp.lambda) * l3),
    })
}

/// Per-variable sampling interval, applied to every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub w: (f64, f64),
    pub y: (f64, f64),
    pub alpha: (f64, f64),
}

impl SampleBox {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        SampleBox {
            w: (lo, hi),
            y: (lo, hi),
            alpha: (lo, hi),
        }
    }
}

/// Sampled lower bounds on the gradient Lipschitz constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// For `∇L_val` over `(y, alpha)`.
    pub l1: f64,
    /// For `∇L_train` over `(w, alpha)`.
    pub l2: f64,
    pub samples: usize,
}

fn sample_like(template: &ParamVector, (lo, hi): (f64, f64), rng: &mut ChaCha8Rng) -> ParamVector {
    let mut v = template.clone();
    for x in v.values_mut() {
        *x = rng.gen_range(lo..hi);
    }
    v
}

fn joint_ratio(g1: (&ParamVector, &ParamVector), g2: (&ParamVector, &ParamVector), d: (f64, f64)) -> Result<f64> {
    let dg = g1.0.sub(g2.0)?.norm().powi(2) + g1.1.sub(g2.1)?.norm().powi(2);
    let dz = d.0 * d.0 + d.1 * d.1;
    Ok(if dz > 0.0 { (dg / dz).sqrt() } else { 0.0 })
}

/// Max over `n_samples` random pairs of `||∇L(z) - ∇L(z')|| / ||z - z'||`.
///
/// Sampling can only under-estimate the true constants.
pub fn estimate_lipschitz<O: BilevelObjective + ?Sized>(
    obj: &O,
    template: &SearchState,
    bounds: &SampleBox,
    n_samples: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if n_samples < 2 {
        return Err(Error::config("estimate_lipschitz needs at least 2 samples"));
    }
    for (name, (lo, hi)) in [("w", bounds.w), ("y", bounds.y), ("alpha", bounds.alpha)] {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::config(format!(
                "degenerate sampling interval for {name}: [{lo}, {hi}]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l1: f64 = 0.0;
    let mut l2: f64 = 0.0;
    for _ in 0..n_samples {
        let y1 = sample_like(&template.y, bounds.y, &mut rng);
        let y2 = sample_like(&template.y, bounds.y, &mut rng);
        let a1 = sample_like(&template.alpha, bounds.alpha, &mut rng);
        let a2 = sample_like(&template.alpha, bounds.alpha, &mut rng);
        let w1 = sample_like(&template.w, bounds.w, &mut rng);
        let w2 = sample_like(&template.w, bounds.w, &mut rng);
        let da = a1.sub(&a2)?.norm();

        let gy1 = obj.grad_y_val(&y1, &a1)?;
        let ga1 = obj.grad_alpha_val(&y1, &a1)?;
        let gy2 = obj.grad_y_val(&y2, &a2)?;
        let ga2 = obj.grad_alpha_val(&y2, &a2)?;
        l1 = l1.max(joint_ratio((&gy1, &ga1), (&gy2, &ga2), (y1.sub(&y2)?.norm(), da))?);

        let gw1 = obj.grad_w_train(&w1, &a1)?;
        let gb1 = obj.grad_alpha_train(&w1, &a1)?;
        let gw2 = obj.grad_w_train(&w2, &a2)?;
        let gb2 = obj.grad_alpha_train(&w2, &a2)?;
        l2 = l2.max(joint_ratio((&gw1, &gb1), (&gw2, &gb2), (w1.sub(&w2)?.norm(), da))?);
    }
    Ok(LipschitzEstimate {
        l1,
        l2,
        samples: n_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentViolation {
    pub t: u64,
    pub before: f64,
    pub after: f64,
}

/// Steps where the Lagrangian rose by more than `slack`.
///
/// The trajectory must be logged at every step.
pub fn descent_check<O: BilevelObjective + ?Sized>(
    traj: &Trajectory,
    obj: &O,
    hp: &HyperParams,
    slack: f64,
) -> Result<Vec<DescentViolation>> {
    let mut out = Vec::new();
    let mut prev: Option<(u64, f64)> = None;
    for rec in &traj.records {
        let l = eval_lagrangian(obj, &rec.y, &rec.w, &rec.alpha, hp)?;
        if let Some((t, before)) = prev {
            if rec.t != t + 1 {
                return Err(Error::config(format!(
                    "trajectory has a gap between t={t} and t={}; log every step to certify descent",
                    rec.t
                )));
            }
            if l > before + slack {
                out.push(DescentViolation { t, before, after: l });
            }
        }
        prev = Some((rec.t, l));
    }
    Ok(out)
}

/// Norms of the three equilibrium left-hand sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResidual {
    pub r_w: f64,
    pub r_y: f64,
    pub r_alpha: f64,
}

impl EquilibriumResidual {
    pub fn max(&self) -> f64 {
        self.r_w.max(self.r_y).max(self.r_alpha)
    }
}

pub fn equilibrium_residual<O: BilevelObjective + ?Sized>(
    obj: &O,
    state: &SearchState,
    hp: &HyperParams,
) -> Result<EquilibriumResidual> {
    let SearchState { w, y, alpha, .. } = state;
    let rw = obj
        .grad_w_train(w, alpha)?
        .scaled(hp.lambda)
        .axpy(hp.beta, &w.sub(y)?)?;
    let ry = obj.grad_y_val(y, alpha)?.axpy(hp.beta, &y.sub(w)?)?;
    let ra = obj
        .grad_alpha_val(y, alpha)?
        .axpy(hp.lambda, &obj.grad_alpha_train(w, alpha)?)?;
    Ok(EquilibriumResidual {
        r_w: rw.norm(),
        r_y: ry.norm(),
        r_alpha: ra.norm(),
    })
}

/// Fixed point `(alpha, w, y)` of RARTS on the quadratic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticEquilibrium<T = f64> {
    pub alpha: T,
    pub w: T,
    pub y: T,
}

/// Solves the equilibrium system of the quadratic model in any field.
///
/// With `D = 4·lambda·beta - beta - 2·lambda`:
/// `alpha = 4·lambda·beta / D`, `w = 2·beta·(2·lambda - 1) / D`,
/// `y = 2 - alpha`. Returns `None` when `D = 0`.
fn solve_quadratic_equilibrium<T: Num + Copy>(lambda: T, beta: T) -> Option<QuadraticEquilibrium<T>> {
    let two = T::one() + T::one();
    let four = two + two;
    let d = four * lambda * beta - beta - two * lambda;
    if d == T::zero() {
        return None;
    }
    let alpha = four * lambda * beta / d;
    let w = two * beta * (two * lambda - T::one()) / d;
    Some(QuadraticEquilibrium {
        alpha,
        w,
        y: two - alpha,
    })
}

/// Exact solution of the equilibrium system on the quadratic model.
///
/// Adding the first two equations gives `w = (2·lambda - 1)/(2·lambda)·alpha`;
/// the third then reads `alpha + y - 2 = 0` because `∇_alpha L_val(y, alpha)
/// = y - 2` is evaluated at `y`, not `w`. The system is singular only when
/// `4·lambda·beta = beta + 2·lambda`.
pub fn quadratic_equilibrium(lambda: f64, beta: f64) -> Result<QuadraticEquilibrium> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("lambda must be positive, got {lambda}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::config(format!("beta must be non-negative, got {beta}")));
    }
    solve_quadratic_equilibrium(lambda, beta).ok_or(Error::NonUnique { lambda, beta })
}

/// [`quadratic_equilibrium`] in exact rational arithmetic.
pub fn quadratic_equilibrium_exact(lambda: Ratio<i64>, beta: Ratio<i64>) -> Result<QuadraticEquilibrium<Ratio<i64>>> {
    let as_f64 = |r: Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
    if !lambda.is_positive() || beta.is_negative() {
        return Err(Error::config("lambda must be positive and beta non-negative"));
    }
    solve_quadratic_equilibrium(lambda, beta).ok_or(Error::NonUnique {
        lambda: as_f64(lambda),
        beta: as_f64(beta),
    })
}

/// `beta -> infinity` limit of [`quadratic_equilibrium`], where the two
/// weight copies coincide: `(alpha, w) = (4·lambda/(4·lambda - 1),
/// (4·lambda - 2)/(4·lambda - 1))`, undefined at `lambda = 1/4`.
pub fn quadratic_coupled_limit(lambda: f64) -> Result<(f64, f64)> {
    let d = 4.0 * lambda - 1.0;
    if d == 0.0 {
        return Err(Error::NonUnique {
            lambda,
            beta: f64::INFINITY,
        });
    }
    Ok((4.0 * lambda / d, (4.0 * lambda - 2.0) / d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Layout, QuadraticModel};
    use crate::solvers::{run, SolverKind, StopRule};

    fn q_state(q: &QuadraticModel, alpha: f64, w: f64, y: f64) -> SearchState {
        let (w, y, a) = q.point(w, y, alpha);
        SearchState::new(w, y, a).unwrap()
    }

    #[test]
    fn bounds_hand_values() {
        let b = step_size_bounds(1.0, 1.0, &HyperParams::new(1.0, 0.0, 0.1)).unwrap();
        assert_eq!(b.l3, 1.0);
        assert!((b.c1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((b.c2 - 1.0 / 3.0).abs() < 1e-15);
        assert!((b.c3 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bounds_symmetric_inputs() {
        let b = step_size_bounds(2.5, 2.5, &HyperParams::new(7.0, 3.0, 0.1)).unwrap();
        assert_eq!(b.c1, b.c2);
    }

    #[test]
    fn bounds_reject_nonpositive() {
        let hp = HyperParams::new(1.0, 1.0, 0.1);
        assert!(step_size_bounds(0.0, 1.0, &hp).is_err());
        assert!(step_size_bounds(1.0, -1.0, &hp).is_err());
    }

    #[test]
    fn bounds_for_figure_configuration() {
        // lambda = beta = 10 with the exact constants 1 and 4: the fixed 0.01
        // rates sit below every bound.
        let hp = HyperParams::new(10.0, 10.0, 0.01);
        let b = step_size_bounds(1.0, 4.0, &hp).unwrap();
        assert!((b.c1 - 1.0 / 55.0).abs() < 1e-15);
        assert!((b.c2 - 0.5 / 29.0).abs() < 1e-15);
        assert!((b.c3 - 1.0 / 44.0).abs() < 1e-15);
        assert!(b.admits(&hp));
    }

    #[test]
    fn lipschitz_quadratic_from_below() {
        let q = QuadraticModel::new();
        let tpl = q_state(&q, 0.0, 0.0, 0.0);
        let mut prev = (0.0, 0.0);
        for n in [10, 100, 10_000] {
            let e = estimate_lipschitz(&q, &tpl, &SampleBox::uniform(-3.0, 3.0), n, 7).unwrap();
            assert!(e.l1 <= 1.0 + 1e-12 && e.l2 <= 4.0 + 1e-12, "{e:?}");
            assert!(e.l1 >= prev.0 && e.l2 >= prev.1);
            prev = (e.l1, e.l2);
        }
        assert!(prev.0 > 0.99 && prev.1 > 3.99, "{prev:?}");
    }

    #[test]
    fn lipschitz_rejects_bad_input() {
        let q = QuadraticModel::new();
        let tpl = q_state(&q, 0.0, 0.0, 0.0);
        assert!(estimate_lipschitz(&q, &tpl, &SampleBox::uniform(1.0, 1.0), 10, 0).is_err());
        assert!(estimate_lipschitz(&q, &tpl, &SampleBox::uniform(-1.0, 1.0), 1, 0).is_err());
    }

    /// `L_train = <c, w> + <d, alpha>`, `L_val = <c, y> - <d, alpha>`.
    struct Linear;

    impl BilevelObjective for Linear {
        fn eval_train(&self, w: &ParamVector, a: &ParamVector) -> Result<f64> {
            Ok(w.values().iter().sum::<f64>() + 2.0 * a.values().iter().sum::<f64>())
        }
        fn eval_val(&self, y: &ParamVector, a: &ParamVector) -> Result<f64> {
            Ok(y.values().iter().sum::<f64>() - 2.0 * a.values().iter().sum::<f64>())
        }
        fn grad_w_train(&self, w: &ParamVector, _: &ParamVector) -> Result<ParamVector> {
            ParamVector::from_values(w.layout().clone(), vec![1.0; w.len()])
        }
        fn grad_alpha_train(&self, _: &ParamVector, a: &ParamVector) -> Result<ParamVector> {
            ParamVector::from_values(a.layout().clone(), vec![2.0; a.len()])
        }
        fn grad_y_val(&self, y: &ParamVector, _: &ParamVector) -> Result<ParamVector> {
            ParamVector::from_values(y.layout().clone(), vec![1.0; y.len()])
        }
        fn grad_alpha_val(&self, _: &ParamVector, a: &ParamVector) -> Result<ParamVector> {
            ParamVector::from_values(a.layout().clone(), vec![-2.0; a.len()])
        }
    }

    #[test]
    fn lipschitz_of_linear_is_zero() {
        let w = ParamVector::zeros(Layout::new([("w", 3, 1)]).unwrap());
        let a = ParamVector::zeros(Layout::new([("alpha", 2, 2)]).unwrap());
        let tpl = SearchState::with_shared_weights(w, a);
        let e = estimate_lipschitz(&Linear, &tpl, &SampleBox::uniform(-1.0, 1.0), 50, 1).unwrap();
        assert_eq!((e.l1, e.l2), (0.0, 0.0));
    }

    /// Both losses identically zero.
    struct Flat;

    impl BilevelObjective for Flat {
        fn eval_train(&self, _: &ParamVector, _: &ParamVector) -> Result<f64> {
            Ok(0.0)
        }
        fn eval_val(&self, _: &ParamVector, _: &ParamVector) -> Result<f64> {
            Ok(0.0)
        }
        fn grad_w_train(&self, w: &ParamVector, _: &ParamVector) -> Result<ParamVector> {
            Ok(ParamVector::zeros(w.layout().clone()))
        }
        fn grad_alpha_train(&self, _: &ParamVector, a: &ParamVector) -> Result<ParamVector> {
            Ok(ParamVector::zeros(a.layout().clone()))
        }
        fn grad_y_val(&self, y: &ParamVector, _: &ParamVector) -> Result<ParamVector> {
            Ok(ParamVector::zeros(y.layout().clone()))
        }
        fn grad_alpha_val(&self, _: &ParamVector, a: &ParamVector) -> Result<ParamVector> {
            Ok(ParamVector::zeros(a.layout().clone()))
        }
    }

    #[test]
    fn descent_on_flat_objective() {
        let tpl = SearchState::with_shared_weights(ParamVector::scalar("w", 0.5), ParamVector::scalar("a", 1.0));
        let hp = HyperParams::new(1.0, 1.0, 0.1);
        let traj = run(SolverKind::Rarts, &Flat, tpl, &hp, &StopRule::steps(20), 1).unwrap();
        assert!(descent_check(&traj, &Flat, &hp, 1e-12).unwrap().is_empty());
    }

    #[test]
    fn descent_under_bounds_and_violations_over() {
        let q = QuadraticModel::new();
        let hp = HyperParams::new(10.0, 10.0, 0.01);
        let bounds = step_size_bounds(1.0, 4.0, &hp).unwrap();
        let safe = bounds.scaled_rates(&hp, 0.9);
        let traj = run(
            SolverKind::Rarts,
            &q,
            q_state(&q, 2.0, -2.0, 0.0),
            &safe,
            &StopRule::steps(2000),
            1,
        )
        .unwrap();
        assert!(descent_check(&traj, &q, &safe, 1e-12).unwrap().is_empty());

        let wild = HyperParams::new(10.0, 10.0, 10.0);
        let stop = StopRule {
            max_steps: 5,
            grad_tol: 0.0,
            divergence_bound: f64::MAX,
        };
        let traj = run(SolverKind::Rarts, &q, q_state(&q, 2.0, -2.0, 0.0), &wild, &stop, 1).unwrap();
        assert!(!descent_check(&traj, &q, &wild, 1e-12).unwrap().is_empty());
    }

    #[test]
    fn descent_rejects_gaps() {
        let q = QuadraticModel::new();
        let hp = HyperParams::new(10.0, 10.0, 0.01);
        let traj = run(
            SolverKind::Rarts,
            &q,
            q_state(&q, 2.0, -2.0, 0.0),
            &hp,
            &StopRule::steps(10),
            3,
        )
        .unwrap();
        assert!(descent_check(&traj, &q, &hp, 1e-12).is_err());
    }

    #[test]
    fn residual_hand_values() {
        let q = QuadraticModel::new();
        let r = equilibrium_residual(&q, &q_state(&q, 2.0, -2.0, 0.0), &HyperParams::new(10.0, 10.0, 0.01)).unwrap();
        assert_eq!((r.r_w, r.r_y, r.r_alpha), (100.0, 22.0, 78.0));
    }

    #[test]
    fn residual_at_joint_stationary_point() {
        // beta = 0, y = w at a stationary point of lambda·L_train + L_val in
        // (w, alpha): the alpha row vanishes and the w and y rows cancel in
        // sum, each equal to |alpha|.
        let q = QuadraticModel::new();
        let lambda = 3.0;
        let (alpha, w) = quadratic_coupled_limit(lambda).unwrap();
        let r = equilibrium_residual(&q, &q_state(&q, alpha, w, w), &HyperParams::new(lambda, 0.0, 0.01)).unwrap();
        assert!(r.r_alpha < 1e-14, "{r:?}");
        assert!((r.r_w - alpha).abs() < 1e-14 && (r.r_y - alpha).abs() < 1e-14, "{r:?}");
    }

    #[test]
    fn equilibrium_solves_system() {
        let q = QuadraticModel::new();
        for lambda in [0.25, 0.5, 1.0, 2.0, 10.0, 100.0] {
            for beta in [0.0, 1.0, 10.0, 100.0] {
                if 4.0 * lambda * beta == beta + 2.0 * lambda {
                    assert!(matches!(
                        quadratic_equilibrium(lambda, beta),
                        Err(Error::NonUnique { .. })
                    ));
                    continue;
                }
                let e = quadratic_equilibrium(lambda, beta).unwrap();
                let hp = HyperParams::new(lambda, beta, 0.01);
                let r = equilibrium_residual(&q, &q_state(&q, e.alpha, e.w, e.y), &hp).unwrap();
                assert!(r.max() < 1e-10, "lambda={lambda} beta={beta}: {r:?}");
                let lin = (2.0 * lambda - 1.0) / (2.0 * lambda) * e.alpha;
                assert!((e.w - lin).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equilibrium_exact_rational() {
        let e = quadratic_equilibrium_exact(Ratio::from_integer(10), Ratio::from_integer(10)).unwrap();
        assert_eq!(e.alpha, Ratio::new(40, 37));
        assert_eq!(e.w, Ratio::new(38, 37));
        assert_eq!(e.y, Ratio::new(34, 37));
    }

    #[test]
    fn equilibrium_singular_and_invalid() {
        // 4·lambda·beta = beta + 2·lambda at lambda = 1, beta = 2/3
        assert!(matches!(
            quadratic_equilibrium_exact(Ratio::from_integer(1), Ratio::new(2, 3)),
            Err(Error::NonUnique { .. })
        ));
        assert!(quadratic_equilibrium(0.0, 1.0).is_err());
        assert!(quadratic_equilibrium(1.0, -1.0).is_err());
    }

    #[test]
    fn coupled_limit() {
        let (a, w) = quadratic_coupled_limit(10.0).unwrap();
        assert!((a - 40.0 / 39.0).abs() < 1e-15 && (w - 38.0 / 39.0).abs() < 1e-15);
        assert!(matches!(quadratic_coupled_limit(0.25), Err(Error::NonUnique { .. })));
        let e = quadratic_equilibrium(10.0, 1e9).unwrap();
        assert!((e.alpha - a).abs() < 1e-7 && (e.w - w).abs() < 1e-7);
        let (a, w) = quadratic_coupled_limit(1e9).unwrap();
        assert!((a - 1.0).abs() < 1e-8 && (w - 1.0).abs() < 1e-8);
    }
}
