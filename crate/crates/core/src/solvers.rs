//! Iteration rules and the run loop.
//!
//! [`rarts_step`] minimizes the relaxed Lagrangian
//! `L(y, w, alpha) = L_val(y, alpha) + lambda·L_train(w, alpha) + beta/2·||y - w||²`
//! by one Gauss-Seidel sweep: `w`, then `y` using the new `w`, then `alpha`
//! using both new weight vectors. Only first-order partial gradients are
//! used. The baselines [`darts1_step`], [`darts2_step`] and [`milenas_step`]
//! share the same state type and carry `y` along unchanged.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{eval_lagrangian, BilevelObjective, HyperParams, MixedDerivative, ParamVector, VirtualStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Rarts,
    Darts1,
    Darts2,
    Milenas,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::Rarts,
        SolverKind::Darts1,
        SolverKind::Darts2,
        SolverKind::Milenas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Rarts => "rarts",
            SolverKind::Darts1 => "darts1",
            SolverKind::Darts2 => "darts2",
            SolverKind::Milenas => "milenas",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown solver `{s}`")))
    }
}

/// Iterate triple plus step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub w: ParamVector,
    pub y: ParamVector,
    pub alpha: ParamVector,
    pub t: u64,
}

impl SearchState {
    pub fn new(w: ParamVector, y: ParamVector, alpha: ParamVector) -> Result<Self> {
        w.ensure_compatible(&y, "w and y must share a layout")?;
        Ok(SearchState { w, y, alpha, t: 0 })
    }

    /// `y` starts as a copy of `w`.
    pub fn with_shared_weights(w: ParamVector, alpha: ParamVector) -> Self {
        SearchState {
            y: w.clone(),
            w,
            alpha,
            t: 0,
        }
    }

    fn max_norm(&self) -> f64 {
        let norms = [self.w.norm(), self.y.norm(), self.alpha.norm()];
        if norms.iter().any(|n| n.is_nan()) {
            return f64::INFINITY;
        }
        norms.into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    pub max_steps: u64,
    /// Stop once every update-direction norm is below this; `0` disables.
    #[serde(default)]
    pub grad_tol: f64,
    /// Abort once any iterate norm exceeds this.
    #[serde(default = "default_divergence_bound")]
    pub divergence_bound: f64,
}

fn default_divergence_bound() -> f64 {
    1e6
}

impl StopRule {
    pub fn steps(max_steps: u64) -> Self {
        StopRule {
            max_steps,
            grad_tol: 0.0,
            divergence_bound: default_divergence_bound(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 1 {
            return Err(Error::config("max_steps must be at least 1"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::config("grad_tol must be non-negative"));
        }
        if !(self.divergence_bound > 0.0) {
            return Err(Error::config("divergence_bound must be positive"));
        }
        Ok(())
    }
}

/// Raised when an iterate leaves the divergence bound.
#[derive(Debug, Clone)]
pub struct DivergenceReport {
    /// Step whose result violated the bound.
    pub step: u64,
    pub norm: f64,
    pub bound: f64,
    /// Last state inside the bound.
    pub last_state: SearchState,
}

/// Norms of the `w`, `y` and `alpha` update directions of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DirectionNorms {
    pub w: f64,
    pub y: f64,
    pub alpha: f64,
}

impl DirectionNorms {
    fn all_below(&self, tol: f64) -> bool {
        self.w < tol && self.y < tol && self.alpha < tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: u64,
    pub w: ParamVector,
    pub y: ParamVector,
    pub alpha: ParamVector,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lagrangian: f64,
    /// Directions of the step that produced this state; zero for `t = 0`.
    pub directions: DirectionNorms,
}

impl Record {
    pub fn state(&self) -> SearchState {
        SearchState {
            w: self.w.clone(),
            y: self.y.clone(),
            alpha: self.alpha.clone(),
            t: self.t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub solver: SolverKind,
    pub records: Vec<Record>,
    pub stop_reason: StopReason,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records
            .last()
            .expect("a trajectory always holds the initial record")
    }

    pub fn final_state(&self) -> SearchState {
        self.last().state()
    }
}

fn finite(v: ParamVector, variable: &'static str, step: u64) -> Result<ParamVector> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { variable, step })
    }
}

/// `w+ = w - eta_w·(lambda·∇_w L_train(w, alpha) + beta·(w - y))`
pub fn rarts_weight_update<O: BilevelObjective + ?Sized>(
    state: &SearchState,
    obj: &O,
    hp: &HyperParams,
) -> Result<(ParamVector, ParamVector)> {
    let (eta_w, _, _) = hp.rates_at(state.t);
    let g = finite(obj.grad_w_train(&state.w, &state.alpha)?, "grad_w_train", state.t)?;
    let dir = g.scaled(hp.lambda).axpy(hp.beta, &state.w.sub(&state.y)?)?;
    Ok((state.w.axpy(-eta_w, &dir)?, dir))
}

/// `y+ = y - eta_y·(∇_y L_val(y, alpha) + beta·(y - w+))`
pub fn rarts_auxiliary_update<O: BilevelObjective + ?Sized>(
    state: &SearchState,
    w_next: &ParamVector,
    obj: &O,
    hp: &HyperParams,
) -> Result<(ParamVector, ParamVector)> {
    let (_, eta_y, _) = hp.rates_at(state.t);
    let g = finite(obj.grad_y_val(&state.y, &state.alpha)?, "grad_y_val", state.t)?;
    let dir = g.axpy(hp.beta, &state.y.sub(w_next)?)?;
    Ok((state.y.axpy(-eta_y, &dir)?, dir))
}

/// `lambda·∇_alpha L_train(w+, alpha) + ∇_alpha L_val(y+, alpha)`
pub fn rarts_alpha_direction<O: BilevelObjective + ?Sized>(
    obj: &O,
    hp: &HyperParams,
    w_next: &ParamVector,
    y_next: &ParamVector,
    alpha: &ParamVector,
) -> Result<ParamVector> {
    let gt = obj.grad_alpha_train(w_next, alpha)?;
    let gv = obj.grad_alpha_val(y_next, alpha)?;
    gv.axpy(hp.lambda, &gt)
}

/// `lambda·∇_alpha L_train(w+, alpha) + ∇_alpha L_val(w+, alpha)`
pub fn milenas_alpha_direction<O: BilevelObjective + ?Sized>(
    obj: &O,
    hp: &HyperParams,
    w_next: &ParamVector,
    alpha: &ParamVector,
) -> Result<ParamVector> {
    rarts_alpha_direction(obj, hp, w_next, w_next, alpha)
}

/// Second-order DARTS architecture direction
/// `∇_alpha L_val(w', alpha) - xi·∇²_{alpha,w} L_train(base, alpha)·∇_w' L_val(w', alpha)`
/// with the virtual step `w' = base - xi·∇_w L_train(base, alpha)`.
pub fn darts2_alpha_direction<O: BilevelObjective + ?Sized>(
    obj: &O,
    hp: &HyperParams,
    base: &ParamVector,
    alpha: &ParamVector,
) -> Result<ParamVector> {
    if !(hp.xi > 0.0) {
        return Err(Error::config(format!("darts2 requires xi > 0, got {}", hp.xi)));
    }
    let virtual_w = base.axpy(-hp.xi, &obj.grad_w_train(base, alpha)?)?;
    let g_virtual = obj.grad_y_val(&virtual_w, alpha)?;
    let exact = match hp.mixed_derivative {
        MixedDerivative::Auto => obj.mixed_train_apply(base, alpha, &g_virtual),
        MixedDerivative::FiniteDifference => None,
    };
    let mixed = match exact {
        Some(m) => m?,
        None => {
            let eps = hp.fd_epsilon_scale / g_virtual.norm().max(1e-12);
            let plus = obj.grad_alpha_train(&base.axpy(eps, &g_virtual)?, alpha)?;
            let minus = obj.grad_alpha_train(&base.axpy(-eps, &g_virtual)?, alpha)?;
            plus.sub(&minus)?.scaled(1.0 / (2.0 * eps))
        }
    };
    obj.grad_alpha_val(&virtual_w, alpha)?.axpy(-hp.xi, &mixed)
}

struct Step {
    next: SearchState,
    directions: DirectionNorms,
}

fn rarts_detailed<O: BilevelObjective + ?Sized>(state: &SearchState, obj: &O, hp: &HyperParams) -> Result<Step> {
    let (_, _, eta_a) = hp.rates_at(state.t);
    let (w, dw) = rarts_weight_update(state, obj, hp)?;
    let (y, dy) = rarts_auxiliary_update(state, &w, obj, hp)?;
    let da = finite(
        rarts_alpha_direction(obj, hp, &w, &y, &state.alpha)?,
        "alpha direction",
        state.t,
    )?;
    let alpha = state.alpha.axpy(-eta_a, &da)?;
    Ok(Step {
        directions: DirectionNorms {
            w: dw.norm(),
            y: dy.norm(),
            alpha: da.norm(),
        },
        next: SearchState {
            w,
            y,
            alpha,
            t: state.t + 1,
        },
    })
}

fn darts1_detailed<O: BilevelObjective + ?Sized>(state: &SearchState, obj: &O, hp: &HyperParams) -> Result<Step> {
    let (eta_w, _, eta_a) = hp.rates_at(state.t);
    let dw = finite(obj.grad_w_train(&state.w, &state.alpha)?, "grad_w_train", state.t)?;
    let w = state.w.axpy(-eta_w, &dw)?;
    let da = finite(obj.grad_alpha_val(&w, &state.alpha)?, "grad_alpha_val", state.t)?;
    let alpha = state.alpha.axpy(-eta_a, &da)?;
    Ok(Step {
        directions: DirectionNorms {
            w: dw.norm(),
            y: 0.0,
            alpha: da.norm(),
        },
        next: SearchState {
            w,
            y: state.y.clone(),
            alpha,
            t: state.t + 1,
        },
    })
}

fn darts2_detailed<O: BilevelObjective + ?Sized>(state: &SearchState, obj: &O, hp: &HyperParams) -> Result<Step> {
    if !(hp.xi > 0.0) {
        return Err(Error::config(format!("darts2 requires xi > 0, got {}", hp.xi)));
    }
    let (eta_w, _, eta_a) = hp.rates_at(state.t);
    let dw = finite(obj.grad_w_train(&state.w, &state.alpha)?, "grad_w_train", state.t)?;
    let w = state.w.axpy(-eta_w, &dw)?;
    let base = match hp.virtual_step {
        VirtualStep::PostUpdate => &w,
        VirtualStep::PreUpdate => &state.w,
    };
    let da = finite(
        darts2_alpha_direction(obj, hp, base, &state.alpha)?,
        "alpha direction",
        state.t,
    )?;
    let alpha = state.alpha.axpy(-eta_a, &da)?;
    Ok(Step {
        directions: DirectionNorms {
            w: dw.norm(),
            y: 0.0,
            alpha: da.norm(),
        },
        next: SearchState {
            w,
            y: state.y.clone(),
            alpha,
            t: state.t + 1,
        },
    })
}

fn milenas_detailed<O: BilevelObjective + ?Sized>(state: &SearchState, obj: &O, hp: &HyperParams) -> Result<Step> {
    let (eta_w, _, eta_a) = hp.rates_at(state.t);
    let g = finite(obj.grad_w_train(&state.w, &state.alpha)?, "grad_w_train", state.t)?;
    let dw = g.scaled(hp.lambda);
    let w = state.w.axpy(-eta_w, &dw)?;
    let da = finite(
        milenas_alpha_direction(obj, hp, &w, &state.alpha)?,
        "alpha direction",
        state.t,
    )?;
    let alpha = state.alpha.axpy(-eta_a, &da)?;
    Ok(Step {
        directions: DirectionNorms {
            w: dw.norm(),
            y: 0.0,
            alpha: da.norm(),
        },
        next: SearchState {
            w,
            y: state.y.clone(),
            alpha,
            t: state.t + 1,
        },
    })
}

fn step_detailed<O: BilevelObjective + ?Sized>(
    kind: SolverKind,
    state: &SearchState,
    obj: &O,
    hp: &HyperParams,
) -> Result<Step> {
    match kind {
        SolverKind::Rarts => rarts_detailed(state, obj, hp),
        SolverKind::Darts1 => darts1_detailed(state, obj, hp),
        SolverKind::Darts2 => darts2_detailed(state, obj, hp),
        SolverKind::Milenas => milenas_detailed(state, obj, hp),
    }
}

/// One Gauss-Seidel sweep on the relaxed Lagrangian.
pub fn rarts_step<O: BilevelObjective + ?Sized>(state: &SearchState, obj: &O, hp: &HyperParams) -> Result<SearchState> {
    rarts_detailed(state, obj, hp).map(|s| s.next)
}

/// First-order DARTS: `alpha` descends `∇_alpha L_val(w+, alpha)` only.
pub fn darts1_step<O: BilevelObjective + ?Sized>(
    state: &SearchState,
    obj: &O,
    hp: &HyperParams,
) -> Result<SearchState> {
    darts1_detailed(state, obj, hp).map(|s| s.next)
}

/// Second-order DARTS with virtual step `xi`.
pub fn darts2_step<O: BilevelObjective + ?Sized>(
    state: &SearchState,
    obj: &O,
    hp: &HyperParams,
) -> Result<SearchState> {
    darts2_detailed(state, obj, hp).map(|s| s.next)
}

/// Single-network mixed-level update.
pub fn milenas_step<O: BilevelObjective + ?Sized>(
    state: &SearchState,
    obj: &O,
    hp: &HyperParams,
) -> Result<SearchState> {
    milenas_detailed(state, obj, hp).map(|s| s.next)
}

pub fn step<O: BilevelObjective + ?Sized>(
    kind: SolverKind,
    state: &SearchState,
    obj: &O,
    hp: &HyperParams,
) -> Result<SearchState> {
    step_detailed(kind, state, obj, hp).map(|s| s.next)
}

fn record<O: BilevelObjective + ?Sized>(
    state: &SearchState,
    obj: &O,
    hp: &HyperParams,
    directions: DirectionNorms,
) -> Result<Record> {
    Ok(Record {
        t: state.t,
        w: state.w.clone(),
        y: state.y.clone(),
        alpha: state.alpha.clone(),
        train_loss: obj.eval_train(&state.w, &state.alpha)?,
        val_loss: obj.eval_val(&state.y, &state.alpha)?,
        lagrangian: eval_lagrangian(obj, &state.y, &state.w, &state.alpha, hp)?,
        directions,
    })
}

/// Iterates `kind` from `init` until `stop` fires.
///
/// The initial state, every `log_every`-th step and the final step are
/// recorded.
pub fn run<O: BilevelObjective + ?Sized>(
    kind: SolverKind,
    obj: &O,
    init: SearchState,
    hp: &HyperParams,
    stop: &StopRule,
    log_every: u64,
) -> Result<Trajectory> {
    hp.validate()?;
    stop.validate()?;
    if log_every < 1 {
        return Err(Error::config("log_every must be at least 1"));
    }
    if kind == SolverKind::Darts2 && !(hp.xi > 0.0) {
        return Err(Error::config(format!("darts2 requires xi > 0, got {}", hp.xi)));
    }
    init.w.ensure_compatible(&init.y, "w and y must share a layout")?;

    let mut records = vec![record(&init, obj, hp, DirectionNorms::default())?];
    let mut state = init;
    let mut stop_reason = StopReason::MaxSteps;
    for i in 1..=stop.max_steps {
        let Step { next, directions } = step_detailed(kind, &state, obj, hp)?;
        let norm = next.max_norm();
        if !(norm <= stop.divergence_bound) {
            return Err(Error::Divergence(Box::new(DivergenceReport {
                step: next.t,
                norm,
                bound: stop.divergence_bound,
                last_state: state,
            })));
        }
        state = next;
        let converged = stop.grad_tol > 0.0 && directions.all_below(stop.grad_tol);
        if converged {
            stop_reason = StopReason::Converged;
        }
        if i % log_every == 0 || i == stop.max_steps || converged {
            records.push(record(&state, obj, hp, directions)?);
        }
        if converged {
            break;
        }
    }
    Ok(Trajectory {
        solver: kind,
        records,
        stop_reason,
    })
}
