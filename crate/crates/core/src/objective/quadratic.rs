use std::sync::Arc;

use super::{BilevelObjective, Layout, ParamVector};
use crate::error::Result;

/// The solvable one-dimensional bilevel model
///
/// ```text
/// L_train(w, alpha) = w² - 2·alpha·w + alpha²
/// L_val(y, alpha)   = alpha·y - 2·alpha + 1
/// ```
///
/// whose bilevel minimizer is `(alpha, w) = (1, 1)`. All gradients and the
/// mixed derivative (the constant `-2`) are analytic.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    weights: Arc<Layout>,
    arch: Arc<Layout>,
    exact_mixed: bool,
}

impl Default for QuadraticModel {
    fn default() -> Self {
        Self::new()
    }
}

impl QuadraticModel {
    pub fn new() -> Self {
        QuadraticModel {
            weights: Layout::scalar("w"),
            arch: Layout::scalar("alpha"),
            exact_mixed: true,
        }
    }

    /// Same model without the exact mixed-derivative capability.
    pub fn without_mixed_derivative() -> Self {
        QuadraticModel {
            exact_mixed: false,
            ..Self::new()
        }
    }

    pub fn weight_layout(&self) -> &Arc<Layout> {
        &self.weights
    }

    pub fn arch_layout(&self) -> &Arc<Layout> {
        &self.arch
    }

    /// `(w, y, alpha)` as parameter vectors.
    pub fn point(&self, w: f64, y: f64, alpha: f64) -> (ParamVector, ParamVector, ParamVector) {
        (self.weight(w), self.weight(y), self.alpha(alpha))
    }

    pub fn weight(&self, v: f64) -> ParamVector {
        ParamVector::from_values(self.weights.clone(), vec![v]).expect("scalar layout")
    }

    pub fn alpha(&self, v: f64) -> ParamVector {
        ParamVector::from_values(self.arch.clone(), vec![v]).expect("scalar layout")
    }

    fn check(&self, weights: &ParamVector, alpha: &ParamVector) -> Result<(f64, f64)> {
        weights.ensure_compatible(&self.weight(0.0), "quadratic model weights are one scalar `w`")?;
        alpha.ensure_compatible(&self.alpha(0.0), "quadratic model alpha is one scalar `alpha`")?;
        Ok((weights.item(), alpha.item()))
    }
}

impl BilevelObjective for QuadraticModel {
    fn eval_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<f64> {
        let (w, a) = self.check(w, alpha)?;
        Ok(w * w - 2.0 * a * w + a * a)
    }

    fn eval_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<f64> {
        let (y, a) = self.check(y, alpha)?;
        Ok(a * y - 2.0 * a + 1.0)
    }

    fn grad_w_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        let (wv, a) = self.check(w, alpha)?;
        Ok(self.weight(2.0 * wv - 2.0 * a))
    }

    fn grad_alpha_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        let (wv, a) = self.check(w, alpha)?;
        Ok(self.alpha(-2.0 * wv + 2.0 * a))
    }

    fn grad_y_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        let (_, a) = self.check(y, alpha)?;
        Ok(self.weight(a))
    }

    fn grad_alpha_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        let (yv, _) = self.check(y, alpha)?;
        Ok(self.alpha(yv - 2.0))
    }

    fn mixed_train_apply(&self, w: &ParamVector, alpha: &ParamVector, v: &ParamVector) -> Option<Result<ParamVector>> {
        if !self.exact_mixed {
            return None;
        }
        Some(
            self.check(w, alpha)
                .and_then(|_| self.check(v, alpha))
                .map(|(v, _)| self.alpha(-2.0 * v)),
        )
    }
}

/// Exact minimizer over `w` of the quadratic training loss: `w = alpha`.
pub fn inner_argmin_quadratic(alpha: f64) -> f64 {
    alpha
}
