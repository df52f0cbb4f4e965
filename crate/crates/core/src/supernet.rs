//! Toy differentiable search space.
//!
//! A cell is a chain of `edges` edges over `feature_dim`-wide activations.
//! Every edge holds all candidate operations of the menu at once and mixes
//! their outputs with `softmax(alpha[e, ..])`; a linear head maps the last
//! activation to a scalar. Two copies of the weights (`w` fitted on the
//! training split, `y` on the validation split) share one `alpha`.
//!
//! Data comes from a teacher: a discrete cell with one fixed operation per
//! edge and Gaussian weights. Search is judged by whether discretizing the
//! learned `alpha` recovers the teacher's operations.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, Shape, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::objective::{BilevelObjective, Layout, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Zero,
    Identity,
    Linear,
    LinearTanh,
    LinearRelu,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [
        OpKind::Zero,
        OpKind::Identity,
        OpKind::Linear,
        OpKind::LinearTanh,
        OpKind::LinearRelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Zero => "zero",
            OpKind::Identity => "identity",
            OpKind::Linear => "linear",
            OpKind::LinearTanh => "linear_tanh",
            OpKind::LinearRelu => "linear_relu",
        }
    }

    pub fn has_weights(self) -> bool {
        matches!(self, OpKind::Linear | OpKind::LinearTanh | OpKind::LinearRelu)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown op `{s}`")))
    }
}

/// Search space: a chain of `edges` mixed edges sharing one op menu.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub edges: usize,
    pub feature_dim: usize,
    pub ops: Vec<OpKind>,
}

impl Default for CellSpec {
    fn default() -> Self {
        CellSpec {
            edges: 3,
            feature_dim: 8,
            ops: vec![
                OpKind::Zero,
                OpKind::Identity,
                OpKind::Linear,
                OpKind::LinearTanh,
                OpKind::LinearRelu,
            ],
        }
    }
}

impl CellSpec {
    pub fn new(edges: usize, feature_dim: usize, ops: Vec<OpKind>) -> Result<Self> {
        let cell = CellSpec {
            edges,
            feature_dim,
            ops,
        };
        cell.validate()?;
        Ok(cell)
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges == 0 || self.feature_dim == 0 {
            return Err(Error::config("cell needs at least one edge and one feature"));
        }
        if self.ops.is_empty() {
            return Err(Error::config("op menu is empty"));
        }
        let mut seen = self.ops.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.ops.len() {
            return Err(Error::config("op menu has duplicates"));
        }
        Ok(())
    }

    fn edge_menus(&self) -> Vec<Vec<OpKind>> {
        vec![self.ops.clone(); self.edges]
    }

    /// Layout of one supernet weight copy.
    pub fn weight_layout(&self) -> Arc<Layout> {
        weight_layout(&self.edge_menus(), self.feature_dim)
    }

    /// `alpha` as one `edges x ops` segment.
    pub fn arch_layout(&self) -> Arc<Layout> {
        Layout::new([(ALPHA, self.edges, self.ops.len())]).expect("single segment")
    }
}

const ALPHA: &str = "alpha";

fn weight_layout(menus: &[Vec<OpKind>], d: usize) -> Arc<Layout> {
    let mut blocks = Vec::new();
    for (e, menu) in menus.iter().enumerate() {
        for op in menu.iter().filter(|op| op.has_weights()) {
            blocks.push((format!("edge{e}.{op}.weight"), d, d));
            blocks.push((format!("edge{e}.{op}.bias"), 1, d));
        }
    }
    blocks.push(("head.weight".to_string(), d, 1));
    blocks.push(("head.bias".to_string(), 1, 1));
    Layout::new(blocks).expect("generated names are unique")
}

/// One chosen operation per edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Genotype {
    pub edges: Vec<OpKind>,
}

impl Genotype {
    fn menus(&self) -> Vec<Vec<OpKind>> {
        self.edges.iter().map(|&op| vec![op]).collect()
    }

    pub fn weight_layout(&self, feature_dim: usize) -> Arc<Layout> {
        weight_layout(&self.menus(), feature_dim)
    }
}

/// Records the network on `tape` and returns its `n x 1` output.
///
/// Weight leaves are named `prefix + segment`. With `mixing` (an `E x K`
/// matrix of op weights), edge `e` sums `mixing[e, k] * op_k(h)`; without
/// it every menu must hold exactly one op.
fn build_network(
    tape: &mut Tape,
    menus: &[Vec<OpKind>],
    d: usize,
    prefix: &str,
    mixing: Option<Var>,
    x: Var,
    n: usize,
) -> Var {
    let mut h = x;
    for (e, menu) in menus.iter().enumerate() {
        let mut acc: Option<Var> = None;
        for (k, &op) in menu.iter().enumerate() {
            let out = match op {
                OpKind::Zero => continue,
                OpKind::Identity => h,
                OpKind::Linear | OpKind::LinearTanh | OpKind::LinearRelu => {
                    let wt = tape.leaf(&format!("{prefix}edge{e}.{op}.weight"));
                    let b = tape.leaf(&format!("{prefix}edge{e}.{op}.bias"));
                    let z = tape.matmul(h, wt);
                    let z = tape.add_row(z, b);
                    match op {
                        OpKind::LinearTanh => tape.tanh(z),
                        OpKind::LinearRelu => tape.relu(z),
                        _ => z,
                    }
                }
            };
            let term = match mixing {
                Some(p) => {
                    let pk = tape.pick(p, e, k);
                    tape.scale_by(pk, out)
                }
                None => out,
            };
            acc = Some(match acc {
                Some(a) => tape.add(a, term),
                None => term,
            });
        }
        h = acc.unwrap_or_else(|| tape.constant(Tensor::zeros(Shape::new(n, d))));
    }
    let hw = tape.leaf(&format!("{prefix}head.weight"));
    let hb = tape.leaf(&format!("{prefix}head.bias"));
    let out = tape.matmul(h, hw);
    tape.add_row(out, hb)
}

/// Row-wise softmax of the `alpha` segment.
pub fn softmax_rows(alpha: &ParamVector, cell: &CellSpec) -> Result<Vec<Vec<f64>>> {
    let logits = alpha
        .segment(ALPHA)
        .filter(|s| s.len() == cell.edges * cell.ops.len())
        .ok_or_else(|| Error::Incompatible("alpha does not match the cell".into()))?;
    Ok(logits
        .chunks(cell.ops.len())
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = ex.iter().sum();
            ex.into_iter().map(|v| v / z).collect()
        })
        .collect())
}

/// Supernet output for a single input vector.
pub fn mixed_forward(cell: &CellSpec, weights: &ParamVector, alpha: &ParamVector, x: &[f64]) -> Result<f64> {
    let d = cell.feature_dim;
    if x.len() != d {
        return Err(Error::Incompatible(format!(
            "input has {} features, cell expects {d}",
            x.len()
        )));
    }
    weights.ensure_compatible(
        &ParamVector::zeros(cell.weight_layout()),
        "weights do not match the cell",
    )?;
    alpha.ensure_compatible(&ParamVector::zeros(cell.arch_layout()), "alpha does not match the cell")?;
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::new(1, d, x.to_vec()));
    let a = tape.leaf(ALPHA);
    let p = tape.softmax(a);
    let out = build_network(&mut tape, &cell.edge_menus(), d, "", Some(p), xv, 1);
    let _ = tape.sum(out);
    let mut b = Bindings::new();
    weights.bind_into("", &mut b);
    alpha.bind_into("", &mut b);
    Ok(tape.forward(&b)?)
}

/// Inputs `n x d` and targets `n x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub x: Tensor,
    pub y: Tensor,
}

impl Split {
    pub fn len(&self) -> usize {
        self.x.shape().rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn concat(&self, other: &Split) -> Split {
        let d = self.x.shape().cols;
        let n = self.len() + other.len();
        let mut x = self.x.data().to_vec();
        x.extend_from_slice(other.x.data());
        let mut y = self.y.data().to_vec();
        y.extend_from_slice(other.y.data());
        Split {
            x: Tensor::new(n, d, x),
            y: Tensor::new(n, 1, y),
        }
    }
}

/// Teacher cell and the data it generated.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub feature_dim: usize,
    pub teacher: Genotype,
    pub teacher_weights: ParamVector,
    pub train: Split,
    pub val: Split,
    pub test: Split,
    pub noise_std: f64,
}

/// Scale of teacher weights: entries are `N(0, (TEACHER_GAIN / sqrt(d))²)`.
pub const TEACHER_GAIN: f64 = 2.0;

const TEACHER_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const VAL_STREAM: u64 = 2;
const TEST_STREAM: u64 = 3;
const SEARCH_INIT_STREAM: u64 = 4;
const RETRAIN_INIT_STREAM: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian_params(layout: Arc<Layout>, std: f64, rng: &mut ChaCha8Rng) -> ParamVector {
    let mut v = ParamVector::zeros(layout.clone());
    let normal = Normal::new(0.0, std).expect("finite std");
    for seg in layout.segments() {
        let biased = seg.name.ends_with(".bias");
        for x in &mut v.values_mut()[seg.range()] {
            *x = if biased { 0.0 } else { normal.sample(rng) };
        }
    }
    v
}

/// Evaluates a discrete network on a batch of inputs.
pub fn discrete_predict(genotype: &Genotype, weights: &ParamVector, x: &Tensor) -> Result<Vec<f64>> {
    let (n, d) = (x.shape().rows, x.shape().cols);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let out = build_network(&mut tape, &genotype.menus(), d, "", None, xv, n);
    let _ = tape.sum(out);
    let mut b = Bindings::new();
    weights.bind_into("", &mut b);
    tape.forward(&b)?;
    Ok(tape.value(out).expect("evaluated").data().to_vec())
}

fn make_split(
    n: usize,
    teacher: &Genotype,
    weights: &ParamVector,
    d: usize,
    noise_std: f64,
    mut rng: ChaCha8Rng,
) -> Result<Split> {
    let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = Tensor::new(n, d, x);
    let mut y = discrete_predict(teacher, weights, &x)?;
    if noise_std > 0.0 {
        let noise = Normal::new(0.0, noise_std).map_err(|e| Error::config(e.to_string()))?;
        for v in &mut y {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(Split {
        x,
        y: Tensor::new(n, 1, y),
    })
}

/// Draws a teacher from the non-zero entries of the menu and samples the
/// three splits from independent random streams of `seed`.
pub fn gen_task(
    seed: u64,
    cell: &CellSpec,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    noise_std: f64,
) -> Result<SyntheticTask> {
    cell.validate()?;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::config("every split needs at least one sample"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::config(format!(
            "noise_std must be non-negative, got {noise_std}"
        )));
    }
    let candidates: Vec<OpKind> = cell.ops.iter().copied().filter(|&op| op != OpKind::Zero).collect();
    if candidates.is_empty() {
        return Err(Error::config("menu has no non-zero op for the teacher"));
    }
    let d = cell.feature_dim;
    let mut rng = stream(seed, TEACHER_STREAM);
    let teacher = Genotype {
        edges: (0..cell.edges)
            .map(|_| candidates[rng.gen_range(0..candidates.len())])
            .collect(),
    };
    let teacher_weights = gaussian_params(teacher.weight_layout(d), TEACHER_GAIN / (d as f64).sqrt(), &mut rng);
    let split = |n, id| make_split(n, &teacher, &teacher_weights, d, noise_std, stream(seed, id));
    Ok(SyntheticTask {
        feature_dim: d,
        train: split(n_train, TRAIN_STREAM)?,
        val: split(n_val, VAL_STREAM)?,
        test: split(n_test, TEST_STREAM)?,
        teacher: teacher.clone(),
        teacher_weights,
        noise_std,
    })
}

/// Gaussian weights with std `gain / sqrt(d)` and zero biases, drawn from a
/// stream of `seed` that task generation never touches.
pub fn init_weights(layout: Arc<Layout>, feature_dim: usize, gain: f64, seed: u64) -> ParamVector {
    seeded_weights(layout, feature_dim, gain, seed, SEARCH_INIT_STREAM)
}

fn seeded_weights(layout: Arc<Layout>, feature_dim: usize, gain: f64, seed: u64, id: u64) -> ParamVector {
    gaussian_params(layout, gain / (feature_dim as f64).sqrt(), &mut stream(seed, id))
}

/// Weight-sharing supernet as a two-loss problem: `L_train` is the MSE of
/// network `w` on the training split, `L_val` the MSE of network `y` on the
/// validation split; both read the same `alpha`.
#[derive(Debug, Clone)]
pub struct Supernet {
    cell: CellSpec,
    task: Arc<SyntheticTask>,
    weights: Arc<Layout>,
    arch: Arc<Layout>,
}

pub fn supernet_objective(cell: &CellSpec, task: Arc<SyntheticTask>) -> Result<Supernet> {
    cell.validate()?;
    if task.train.is_empty() || task.val.is_empty() {
        return Err(Error::config("supernet splits must be non-empty"));
    }
    if task.feature_dim != cell.feature_dim {
        return Err(Error::config("task and cell disagree on feature_dim"));
    }
    Ok(Supernet {
        cell: cell.clone(),
        weights: cell.weight_layout(),
        arch: cell.arch_layout(),
        task,
    })
}

enum Which {
    Train,
    Val,
}

impl Supernet {
    pub fn cell(&self) -> &CellSpec {
        &self.cell
    }

    pub fn task(&self) -> &SyntheticTask {
        &self.task
    }

    pub fn weight_layout(&self) -> &Arc<Layout> {
        &self.weights
    }

    pub fn arch_layout(&self) -> &Arc<Layout> {
        &self.arch
    }

    /// Fresh search state: Gaussian `w`, `y = w`, `alpha = 0`.
    pub fn init_state(&self, gain: f64, seed: u64) -> crate::solvers::SearchState {
        let w = init_weights(self.weights.clone(), self.cell.feature_dim, gain, seed);
        crate::solvers::SearchState::with_shared_weights(w, ParamVector::zeros(self.arch.clone()))
    }

    /// Records the training (or validation) MSE on `tape`. The leaves are
    /// named after the weight segments plus `alpha`.
    pub fn record_loss(&self, tape: &mut Tape, validation: bool) -> Var {
        let split = if validation { &self.task.val } else { &self.task.train };
        let x = tape.constant(split.x.clone());
        let target = tape.constant(split.y.clone());
        let a = tape.leaf(ALPHA);
        let p = tape.softmax(a);
        let out = build_network(
            tape,
            &self.cell.edge_menus(),
            self.cell.feature_dim,
            "",
            Some(p),
            x,
            split.len(),
        );
        tape.mse(out, target)
    }

    fn check(&self, weights: &ParamVector, alpha: &ParamVector) -> Result<()> {
        if !ParamVector::zeros(self.weights.clone()).is_compatible(weights) {
            return Err(Error::Incompatible("weights do not match the supernet".into()));
        }
        if !ParamVector::zeros(self.arch.clone()).is_compatible(alpha) {
            return Err(Error::Incompatible("alpha does not match the supernet".into()));
        }
        Ok(())
    }

    fn evaluate(
        &self,
        which: Which,
        weights: &ParamVector,
        alpha: &ParamVector,
        grad: bool,
    ) -> Result<(f64, Option<(ParamVector, ParamVector)>)> {
        self.check(weights, alpha)?;
        let mut tape = Tape::new();
        let loss = self.record_loss(&mut tape, matches!(which, Which::Val));
        let mut b = Bindings::new();
        weights.bind_into("", &mut b);
        alpha.bind_into("", &mut b);
        let value = tape.forward(&b)?;
        if !grad {
            return Ok((value, None));
        }
        let g = tape.backward(loss)?;
        Ok((
            value,
            Some((
                ParamVector::from_gradients(self.weights.clone(), "", &g)?,
                ParamVector::from_gradients(self.arch.clone(), "", &g)?,
            )),
        ))
    }

    fn grads(&self, which: Which, weights: &ParamVector, alpha: &ParamVector) -> Result<(ParamVector, ParamVector)> {
        Ok(self
            .evaluate(which, weights, alpha, true)?
            .1
            .expect("gradients requested"))
    }
}

impl BilevelObjective for Supernet {
    fn eval_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<f64> {
        Ok(self.evaluate(Which::Train, w, alpha, false)?.0)
    }

    fn eval_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<f64> {
        Ok(self.evaluate(Which::Val, y, alpha, false)?.0)
    }

    fn grad_w_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        Ok(self.grads(Which::Train, w, alpha)?.0)
    }

    fn grad_alpha_train(&self, w: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        Ok(self.grads(Which::Train, w, alpha)?.1)
    }

    fn grad_y_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        Ok(self.grads(Which::Val, y, alpha)?.0)
    }

    fn grad_alpha_val(&self, y: &ParamVector, alpha: &ParamVector) -> Result<ParamVector> {
        Ok(self.grads(Which::Val, y, alpha)?.1)
    }
}

/// Per edge, the op with the largest softmax weight. The zero op is skipped
/// unless `include_zero`; ties go to the lower menu index.
pub fn discretize(alpha: &ParamVector, cell: &CellSpec, include_zero: bool) -> Result<Genotype> {
    if !include_zero && cell.ops.iter().all(|&op| op == OpKind::Zero) {
        return Err(Error::config("cannot discretize a menu that only holds the zero op"));
    }
    let rows = softmax_rows(alpha, cell)?;
    let edges = rows
        .iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (k, &p) in row.iter().enumerate() {
                if !include_zero && cell.ops[k] == OpKind::Zero {
                    continue;
                }
                if best.map_or(true, |(_, bp)| p > bp) {
                    best = Some((k, p));
                }
            }
            cell.ops[best.expect("menu has a candidate").0]
        })
        .collect();
    Ok(Genotype { edges })
}

/// Mean squared error of a discrete network on a split.
pub fn discrete_mse(genotype: &Genotype, weights: &ParamVector, split: &Split) -> Result<f64> {
    let pred = discrete_predict(genotype, weights, &split.x)?;
    let n = pred.len().max(1) as f64;
    Ok(pred
        .iter()
        .zip(split.y.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainOutcome {
    pub weights: ParamVector,
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: f64,
}

/// Weight gain used when retraining a discrete cell from scratch.
pub const RETRAIN_GAIN: f64 = 1.0;

/// Fits a discrete cell from a fresh initialization by full-batch gradient
/// descent on the union of the training and validation splits.
pub fn retrain(genotype: &Genotype, task: &SyntheticTask, epochs: usize, lr: f64, seed: u64) -> Result<RetrainOutcome> {
    if epochs == 0 {
        return Err(Error::config("retrain needs at least one epoch"));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::config(format!(
            "retrain learning rate must be positive, got {lr}"
        )));
    }
    if genotype.edges.is_empty() {
        return Err(Error::config("genotype has no edges"));
    }
    let d = task.feature_dim;
    let layout = genotype.weight_layout(d);
    let data = task.train.concat(&task.val);
    let n = data.len();

    let mut tape = Tape::new();
    let x = tape.constant(data.x.clone());
    let target = tape.constant(data.y.clone());
    let out = build_network(&mut tape, &genotype.menus(), d, "", None, x, n);
    let loss = tape.mse(out, target);

    let mut weights = seeded_weights(layout.clone(), d, RETRAIN_GAIN, seed, RETRAIN_INIT_STREAM);
    for epoch in 0..epochs {
        let mut b = Bindings::new();
        weights.bind_into("", &mut b);
        let value = tape.forward(&b).map_err(|_| Error::RetrainDiverged { epoch })?;
        if !value.is_finite() {
            return Err(Error::RetrainDiverged { epoch });
        }
        let g = ParamVector::from_gradients(layout.clone(), "", &tape.backward(loss)?)?;
        weights = weights.axpy(-lr, &g)?;
        if !weights.is_finite() {
            return Err(Error::RetrainDiverged { epoch });
        }
    }
    Ok(RetrainOutcome {
        train_mse: discrete_mse(genotype, &weights, &task.train)?,
        val_mse: discrete_mse(genotype, &weights, &task.val)?,
        test_mse: discrete_mse(genotype, &weights, &task.test)?,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;

    fn menu() -> Vec<OpKind> {
        vec![OpKind::Zero, OpKind::Identity, OpKind::LinearTanh, OpKind::LinearRelu]
    }

    fn copy_shared(from: &ParamVector, to: Arc<Layout>) -> ParamVector {
        let mut out = ParamVector::zeros(to.clone());
        for seg in to.segments() {
            if let Some(src) = from.segment(&seg.name) {
                out.segment_mut(&seg.name).unwrap().copy_from_slice(src);
            }
        }
        out
    }

    fn saturated(cell: &CellSpec, picks: &[OpKind]) -> ParamVector {
        let mut a = ParamVector::zeros(cell.arch_layout());
        let k = cell.ops.len();
        for (e, op) in picks.iter().enumerate() {
            for (j, cand) in cell.ops.iter().enumerate() {
                a.values_mut()[e * k + j] = if cand == op { 50.0 } else { -50.0 };
            }
        }
        a
    }

    fn with_probs(cell: &CellSpec, weights: &ParamVector, probs: &[f64], x: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(1, cell.feature_dim, x.to_vec()));
        let p = tape.constant(Tensor::new(cell.edges, cell.ops.len(), probs.to_vec()));
        let out = build_network(&mut tape, &cell.edge_menus(), cell.feature_dim, "", Some(p), xv, 1);
        tape.sum(out);
        let mut b = Bindings::new();
        weights.bind_into("", &mut b);
        tape.forward(&b).unwrap()
    }

    #[test]
    fn op_names_round_trip() {
        for op in OpKind::ALL {
            assert_eq!(op.name().parse::<OpKind>().unwrap(), op);
            assert_eq!(serde_json::to_string(&op).unwrap(), format!("\"{op}\""));
        }
        assert!("conv3x3".parse::<OpKind>().is_err());
    }

    #[test]
    fn cell_validation() {
        assert!(CellSpec::new(0, 8, menu()).is_err());
        assert!(CellSpec::new(2, 8, vec![]).is_err());
        assert!(CellSpec::new(2, 8, vec![OpKind::Linear, OpKind::Linear]).is_err());
        let cell = CellSpec::default();
        assert_eq!((cell.edges, cell.feature_dim, cell.ops.len()), (3, 8, 5));
        // per edge: 3 weighted ops of 8x8 + 1x8, then the head
        assert_eq!(cell.weight_layout().len(), 3 * 3 * 72 + 9);
    }

    #[test]
    fn saturated_alpha_selects_single_op() {
        let cell = CellSpec::new(2, 4, menu()).unwrap();
        let weights = init_weights(cell.weight_layout(), 4, 1.0, 3);
        let x = [0.3, -1.2, 0.8, 0.05];
        for picks in [
            [OpKind::LinearRelu, OpKind::Identity],
            [OpKind::LinearTanh, OpKind::LinearTanh],
        ] {
            let g = Genotype { edges: picks.to_vec() };
            let single = discrete_predict(
                &g,
                &copy_shared(&weights, g.weight_layout(4)),
                &Tensor::new(1, 4, x.to_vec()),
            )
            .unwrap()[0];
            let mixed = mixed_forward(&cell, &weights, &saturated(&cell, &picks), &x).unwrap();
            assert!((single - mixed).abs() < 1e-10, "{single} vs {mixed}");
        }
    }

    #[test]
    fn zero_menu_outputs_head_bias() {
        let cell = CellSpec::new(2, 3, vec![OpKind::Zero]).unwrap();
        let mut w = ParamVector::zeros(cell.weight_layout());
        w.segment_mut("head.weight").unwrap().copy_from_slice(&[1.0, 2.0, 3.0]);
        w.segment_mut("head.bias").unwrap()[0] = 0.75;
        for logit in [-4.0, 0.0, 9.0] {
            let a = ParamVector::from_values(cell.arch_layout(), vec![logit, logit]).unwrap();
            assert_eq!(mixed_forward(&cell, &w, &a, &[5.0, -1.0, 2.0]).unwrap(), 0.75);
        }
    }

    #[test]
    fn uniform_identity_and_zero_halves_input() {
        let cell = CellSpec::new(1, 3, vec![OpKind::Identity, OpKind::Zero]).unwrap();
        let mut w = ParamVector::zeros(cell.weight_layout());
        w.segment_mut("head.weight")
            .unwrap()
            .copy_from_slice(&[1.0, 10.0, 100.0]);
        let a = ParamVector::zeros(cell.arch_layout());
        let x = [0.4, -2.0, 1.0];
        let expected = 0.2 - 10.0 + 50.0;
        assert!((mixed_forward(&cell, &w, &a, &x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn linear_in_mixing_weights() {
        let cell = CellSpec::new(1, 4, menu()).unwrap();
        let weights = init_weights(cell.weight_layout(), 4, 1.0, 11);
        let x = [1.0, -0.5, 0.25, 2.0];
        let p = [0.1, 0.2, 0.3, 0.4];
        let q = [0.7, -0.3, 0.05, 0.5];
        let pq: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + b).collect();
        let lhs = with_probs(&cell, &weights, &pq, &x);
        let rhs = with_probs(&cell, &weights, &p, &x) + with_probs(&cell, &weights, &q, &x)
            - with_probs(&cell, &weights, &[0.0; 4], &x);
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn shape_errors() {
        let cell = CellSpec::new(2, 4, menu()).unwrap();
        let w = ParamVector::zeros(cell.weight_layout());
        let a = ParamVector::zeros(cell.arch_layout());
        assert!(mixed_forward(&cell, &w, &a, &[1.0, 2.0]).is_err());
        let other = CellSpec::new(3, 4, menu()).unwrap();
        assert!(mixed_forward(&cell, &ParamVector::zeros(other.weight_layout()), &a, &[0.0; 4]).is_err());
        assert!(softmax_rows(&ParamVector::zeros(other.arch_layout()), &cell).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let cell = CellSpec::new(3, 2, menu()).unwrap();
        let vals: Vec<f64> = (0..12).map(|i| (i as f64 * 1.7).sin() * 30.0).collect();
        let a = ParamVector::from_values(cell.arch_layout(), vals).unwrap();
        for row in softmax_rows(&a, &cell).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn tasks_are_deterministic_and_noise_free_targets_match_teacher() {
        let cell = CellSpec::new(2, 8, menu()).unwrap();
        let a = gen_task(5, &cell, 32, 16, 16, 0.0).unwrap();
        let b = gen_task(5, &cell, 32, 16, 16, 0.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_task(6, &cell, 32, 16, 16, 0.0).unwrap());
        assert!(a.teacher.edges.iter().all(|&op| op != OpKind::Zero));
        let pred = discrete_predict(&a.teacher, &a.teacher_weights, &a.test.x).unwrap();
        assert_eq!(pred, a.test.y.data());
        let noisy = gen_task(5, &cell, 32, 16, 16, 0.1).unwrap();
        assert_eq!(noisy.train.x, a.train.x);
        assert_ne!(noisy.train.y, a.train.y);
    }

    #[test]
    fn splits_are_disjoint() {
        let cell = CellSpec::new(2, 8, menu()).unwrap();
        let t = gen_task(0, &cell, 256, 256, 256, 0.0).unwrap();
        let rows = |s: &Split| -> Vec<Vec<u64>> {
            s.x.data()
                .chunks(8)
                .map(|r| r.iter().map(|v| v.to_bits()).collect())
                .collect()
        };
        let mut all: Vec<Vec<u64>> = [&t.train, &t.val, &t.test].into_iter().flat_map(rows).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn task_preconditions() {
        let cell = CellSpec::new(2, 8, menu()).unwrap();
        assert!(gen_task(0, &cell, 0, 4, 4, 0.0).is_err());
        assert!(gen_task(0, &cell, 4, 4, 4, -1.0).is_err());
        let zero_only = CellSpec::new(2, 8, vec![OpKind::Zero]).unwrap();
        assert!(gen_task(0, &zero_only, 4, 4, 4, 0.0).is_err());
    }

    #[test]
    fn teacher_point_fits_exactly() {
        let cell = CellSpec::new(2, 8, menu()).unwrap();
        let task = Arc::new(gen_task(2, &cell, 64, 64, 8, 0.0).unwrap());
        let obj = supernet_objective(&cell, task.clone()).unwrap();
        let w = copy_shared(&task.teacher_weights, cell.weight_layout());
        let a = saturated(&cell, &task.teacher.edges);
        assert!(obj.eval_train(&w, &a).unwrap() < 1e-20);
    }

    #[test]
    fn random_init_has_positive_finite_loss() {
        let cell = CellSpec::new(3, 8, menu()).unwrap();
        let task = Arc::new(gen_task(1, &cell, 256, 16, 16, 0.0).unwrap());
        let obj = supernet_objective(&cell, task).unwrap();
        let s = obj.init_state(1.0, 9);
        let l = obj.eval_train(&s.w, &s.alpha).unwrap();
        assert!(l > 0.0 && l.is_finite());
    }

    #[test]
    fn copied_weights_give_val_gradient() {
        let cell = CellSpec::new(2, 4, menu()).unwrap();
        let task = Arc::new(gen_task(4, &cell, 16, 16, 4, 0.0).unwrap());
        let obj = supernet_objective(&cell, task).unwrap();
        let s = obj.init_state(1.0, 1);
        assert_eq!(
            obj.grad_y_val(&s.y, &s.alpha).unwrap(),
            obj.grad_y_val(&s.w, &s.alpha).unwrap()
        );
        let gw = obj.grad_w_train(&s.w, &s.alpha).unwrap();
        assert_ne!(gw, obj.grad_y_val(&s.w, &s.alpha).unwrap());
    }

    #[test]
    fn supernet_rejects_mismatched_task() {
        let cell = CellSpec::new(2, 4, menu()).unwrap();
        let task = Arc::new(gen_task(4, &CellSpec::new(2, 6, menu()).unwrap(), 4, 4, 4, 0.0).unwrap());
        assert!(supernet_objective(&cell, task).is_err());
    }

    #[test]
    fn supernet_loss_passes_grad_check() {
        let cell = CellSpec::new(2, 4, menu()).unwrap();
        let task = gen_task(7, &cell, 12, 4, 4, 0.0).unwrap();
        let mut point = Bindings::new();
        init_weights(cell.weight_layout(), 4, 1.0, 5).bind_into("", &mut point);
        let alpha: Vec<f64> = (0..8).map(|i| (i as f64 * 0.9).cos()).collect();
        ParamVector::from_values(cell.arch_layout(), alpha)
            .unwrap()
            .bind_into("", &mut point);
        let report = grad_check(
            |t| {
                let x = t.constant(task.train.x.clone());
                let y = t.constant(task.train.y.clone());
                let a = t.leaf(ALPHA);
                let p = t.softmax(a);
                let out = build_network(t, &cell.edge_menus(), 4, "", Some(p), x, 12);
                t.mse(out, y)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn discretize_examples() {
        let cell = CellSpec::new(1, 2, vec![OpKind::Zero, OpKind::Identity, OpKind::Linear]).unwrap();
        let a = ParamVector::from_values(cell.arch_layout(), vec![0.1, 3.0, -1.0]).unwrap();
        assert_eq!(discretize(&a, &cell, false).unwrap().edges, [OpKind::Identity]);
        let a = ParamVector::from_values(cell.arch_layout(), vec![9.0, 3.0, -1.0]).unwrap();
        assert_eq!(discretize(&a, &cell, false).unwrap().edges, [OpKind::Identity]);
        assert_eq!(discretize(&a, &cell, true).unwrap().edges, [OpKind::Zero]);
        let tie = ParamVector::from_values(cell.arch_layout(), vec![0.0, 1.5, 1.5]).unwrap();
        assert_eq!(discretize(&tie, &cell, false).unwrap().edges, [OpKind::Identity]);

        let cell = CellSpec::new(3, 2, menu()).unwrap();
        let teacher = [OpKind::LinearRelu, OpKind::Identity, OpKind::LinearTanh];
        assert_eq!(
            discretize(&saturated(&cell, &teacher), &cell, false).unwrap().edges,
            teacher
        );

        let zero_only = CellSpec::new(1, 2, vec![OpKind::Zero]).unwrap();
        assert!(discretize(&ParamVector::zeros(zero_only.arch_layout()), &zero_only, false).is_err());
    }

    #[test]
    fn genotype_json_shape() {
        let g = Genotype {
            edges: vec![OpKind::LinearTanh, OpKind::Identity],
        };
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(text, r#"{"edges":["linear_tanh","identity"]}"#);
        assert_eq!(serde_json::from_str::<Genotype>(&text).unwrap(), g);
    }

    #[test]
    fn retrain_preconditions() {
        let cell = CellSpec::new(2, 4, menu()).unwrap();
        let task = gen_task(0, &cell, 8, 8, 8, 0.0).unwrap();
        assert!(matches!(
            retrain(&task.teacher, &task, 0, 0.1, 0),
            Err(Error::Config(_))
        ));
        assert!(retrain(&task.teacher, &task, 5, -1.0, 0).is_err());
        assert!(matches!(
            retrain(&task.teacher, &task, 50, 1e6, 0),
            Err(Error::RetrainDiverged { .. })
        ));
    }

    #[test]
    fn retraining_teacher_beats_wrong_cell() {
        let cell = CellSpec::new(1, 4, vec![OpKind::Identity, OpKind::LinearTanh]).unwrap();
        let mut seed = 0;
        let task = loop {
            let t = gen_task(seed, &cell, 128, 128, 128, 0.0).unwrap();
            if t.teacher.edges == [OpKind::LinearTanh] {
                break t;
            }
            seed += 1;
        };
        let good = retrain(&task.teacher, &task, 10000, 0.3, 1).unwrap();
        let wrong = retrain(
            &Genotype {
                edges: vec![OpKind::Identity],
            },
            &task,
            3000,
            0.1,
            1,
        )
        .unwrap();
        assert!(good.test_mse < 1e-4, "{}", good.test_mse);
        assert!(
            wrong.test_mse > 10.0 * good.test_mse.max(1e-4),
            "{} vs {}",
            wrong.test_mse,
            good.test_mse
        );
    }
}
