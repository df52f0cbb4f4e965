//! Two-loss problems and the hyper-parameters shared by every solver.
//!
//! A [`BilevelObjective`] exposes a training loss `L_train(w, alpha)` and a
//! validation loss `L_val(y, alpha)` together with their first-order partial
//! gradients. The mixed derivative `d²L_train/(dalpha dw)` is an optional
//! capability; only the second-order DARTS baseline ever asks for it.

mod params;
mod quadratic;

pub use params::{Layout, ParamVector, Segment};
pub use quadratic::{inner_argmin_quadratic, QuadraticModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training/validation loss pair with first-order partial gradients.
///
/// Implementations must be pure functions of their inputs so that distinct
/// runs can evaluate them from several threads at once.
pub trait BilevelObjective: Send + Sync {
    fn eval_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<f64>;
    fn eval_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<f64>;
    fn grad_w_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<ParamVector>;
    fn grad_alpha_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<ParamVector>;
    fn grad_y_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<ParamVector>;
    fn grad_alpha_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<ParamVector>;

    /// Exact `∇²_{alpha,w} L_train(w, alpha) · v`, where `v` is shaped like
    /// `w` and the result like `alpha`. `None` when not available.
    fn mixed_train_apply(
        &self,
        _w: &ParamVector,
        _alpha: &ParamVector,
        _v: &ParamVector,
    ) -> Option<Result<ParamVector>> {
        None
    }
}

impl<T: BilevelObjective + ?Sized> BilevelObjective for &T {
    fn eval_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<f64> {
        (**self).eval_train(w, alpha)
    }
    fn eval_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<f64> {
        (**self).eval_val(y, alpha)
    }
    fn grad_w_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        (**self).grad_w_train(w, alpha)
    }
    fn grad_alpha_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        (**self).grad_alpha_train(w, alpha)
    }
    fn grad_y_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        (**self).grad_y_val(y, alpha)
    }
    fn grad_alpha_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        (**self).grad_alpha_val(y, alpha)
    }
    fn mixed_train_apply(&self, w: &ParamVector, alpha: &ParamVector, v: &ParamVector) -> Option<Result<ParamVector>> {
        (**self).mixed_train_apply(w, alpha, v)
    }
}

/// Learning-rate multiplier as a function of the step counter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    #[default]
    Constant,
    /// Half-cosine decay from 1 to `floor` over `horizon` steps, then flat at
    /// `floor`. The floor must be strictly positive so that the rates keep a
    /// nonzero limit.
    CosineToFloor { floor: f64, horizon: u64 },
}

impl Schedule {
    pub fn factor(&self, t: u64) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::CosineToFloor { floor, horizon } => {
                let progress = t.min(horizon) as f64 / horizon as f64;
                floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Constant => Ok(()),
            Schedule::CosineToFloor { floor, horizon } => {
                if !(floor > 0.0 && floor <= 1.0) {
                    return Err(Error::config(format!("schedule floor must lie in (0, 1], got {floor}")));
                }
                if horizon == 0 {
                    return Err(Error::config("schedule horizon must be at least 1"));
                }
                Ok(())
            }
        }
    }
}

/// Where the DARTS-2 virtual step evaluates `∇_w L_train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VirtualStep {
    /// At the weights produced by this step's `w` update.
    #[default]
    PostUpdate,
    /// At the weights the step started from.
    PreUpdate,
}

/// How DARTS-2 obtains the mixed-derivative product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedDerivative {
    /// Exact product when the objective provides one, finite differences otherwise.
    #[default]
    Auto,
    FiniteDifference,
}

fn default_fd_scale() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Weight of the training loss in the relaxed Lagrangian.
    pub lambda: f64,
    /// Penalty coupling the two weight copies.
    pub beta: f64,
    pub eta_w: f64,
    pub eta_y: f64,
    pub eta_alpha: f64,
    #[serde(default)]
    pub schedule: Schedule,
    /// DARTS-2 virtual step size; `0` for first-order runs.
    #[serde(default)]
    pub xi: f64,
    #[serde(default = "default_fd_scale")]
    pub fd_epsilon_scale: f64,
    #[serde(default)]
    pub virtual_step: VirtualStep,
    #[serde(default)]
    pub mixed_derivative: MixedDerivative,
}

impl HyperParams {
    /// Constant rate `eta` for all three variables.
    pub fn new(lambda: f64, beta: f64, eta: f64) -> Self {
        HyperParams {
            lambda,
            beta,
            eta_w: eta,
            eta_y: eta,
            eta_alpha: eta,
            schedule: Schedule::Constant,
            xi: 0.0,
            fd_epsilon_scale: default_fd_scale(),
            virtual_step: VirtualStep::PostUpdate,
            mixed_derivative: MixedDerivative::Auto,
        }
    }

    pub fn with_rates(mut self, eta_w: f64, eta_y: f64, eta_alpha: f64) -> Self {
        self.eta_w = eta_w;
        self.eta_y = eta_y;
        self.eta_alpha = eta_alpha;
        self
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("eta_w", self.eta_w)?;
        positive("eta_y", self.eta_y)?;
        positive("eta_alpha", self.eta_alpha)?;
        positive("fd_epsilon_scale", self.fd_epsilon_scale)?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::config(format!("xi must be non-negative, got {}", self.xi)));
        }
        self.schedule.validate()
    }

    /// `(eta_w, eta_y, eta_alpha)` at step `t`.
    pub fn rates_at(&self, t: u64) -> (f64, f64, f64) {
        let f = self.schedule.factor(t);
        (f * self.eta_w, f * self.eta_y, f * self.eta_alpha)
    }
}

/// `L_val(y, alpha) + lambda * L_train(w, alpha) + (beta / 2) * ||y - w||²`
pub fn eval_lagrangian<O: BilevelObjective + ?Sized>(
    obj: &O,
    y: &ParamVector,
    w: &ParamVector,
    alpha: &ParamVector,
    hp: &HyperParams,
) -> Result<f64> {
    y.ensure_compatible(w, "y and w must share a layout")?;
    let gap = y.sub(w)?.norm();
    let val = obj.eval_val(y, alpha)?;
    let train = obj.eval_train(w, alpha)?;
    Ok(val + hp.lambda * train + 0.5 * hp.beta * gap * gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrangian_hand_value() {
        let q = QuadraticModel::new();
        let (w, y, a) = q.point(-2.0, 0.0, 2.0);
        let hp = HyperParams::new(10.0, 10.0, 0.01);
        assert_eq!(eval_lagrangian(&q, &y, &w, &a, &hp).unwrap(), 177.0);
    }

    #[test]
    fn lagrangian_without_penalty() {
        let q = QuadraticModel::new();
        let (w, _, a) = q.point(0.7, 0.0, -1.3);
        let hp = HyperParams::new(3.0, 0.0, 0.01);
        let expect = q.eval_val(&w, &a).unwrap() + 3.0 * q.eval_train(&w, &a).unwrap();
        assert_eq!(eval_lagrangian(&q, &w, &w, &a, &hp).unwrap(), expect);
        let hp = HyperParams::new(3.0, 123.0, 0.01);
        assert_eq!(eval_lagrangian(&q, &w, &w, &a, &hp).unwrap(), expect);
    }

    #[test]
    fn lagrangian_rejects_incompatible() {
        let q = QuadraticModel::new();
        let (w, _, a) = q.point(1.0, 0.0, 1.0);
        let y = ParamVector::scalar("other", 1.0);
        assert!(matches!(
            eval_lagrangian(&q, &y, &w, &a, &HyperParams::new(1.0, 1.0, 0.1)),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn hyperparams_validation() {
        assert!(HyperParams::new(1.0, 0.0, 0.1).validate().is_ok());
        assert!(HyperParams::new(0.0, 1.0, 0.1).validate().is_err());
        assert!(HyperParams::new(1.0, -1.0, 0.1).validate().is_err());
        assert!(HyperParams::new(1.0, 1.0, 0.0).validate().is_err());
        let mut hp = HyperParams::new(1.0, 1.0, 0.1);
        hp.schedule = Schedule::CosineToFloor {
            floor: 0.0,
            horizon: 10,
        };
        assert!(hp.validate().is_err());
    }

    #[test]
    fn cosine_schedule_settles_at_floor() {
        let s = Schedule::CosineToFloor {
            floor: 0.1,
            horizon: 100,
        };
        assert_eq!(s.factor(0), 1.0);
        assert!((s.factor(50) - 0.55).abs() < 1e-12);
        assert!((s.factor(100) - 0.1).abs() < 1e-15);
        assert_eq!(s.factor(10_000), s.factor(100));
        let mut prev = f64::INFINITY;
        for t in 0..=100 {
            assert!(s.factor(t) <= prev);
            prev = s.factor(t);
        }
    }
}
