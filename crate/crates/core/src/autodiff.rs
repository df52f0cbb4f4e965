//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Tape`] records primitive operations over dense `f64` matrices. The
//! graph is built first with symbolic leaves, then evaluated with
//! [`Tape::forward`] against a set of named bindings; [`Tape::backward`]
//! performs a single reverse sweep over the cached values.
//!
//! ```
//! use rarts::autodiff::{Bindings, Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf("x");
//! let sq = tape.mul(x, x);
//! let root = tape.sum(sq);
//!
//! let mut bindings = Bindings::new();
//! bindings.insert("x".into(), Tensor::scalar(-2.0));
//! assert_eq!(tape.forward(&bindings).unwrap(), 4.0);
//! let grads = tape.backward(root).unwrap();
//! assert_eq!(grads.get("x").unwrap().item(), -4.0);
//! ```

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Leaf name to value map used by [`Tape::forward`].
pub type Bindings = BTreeMap<String, Tensor>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("node {node} ({op}): shape mismatch {lhs} vs {rhs}")]
    ShapeMismatch {
        node: usize,
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("node {node} ({op}): non-finite value")]
    NonFinite { node: usize, op: &'static str },
    #[error("leaf `{0}` is not bound")]
    UnboundLeaf(String),
    #[error("root node {node} has shape {shape}, expected a scalar")]
    NonScalarRoot { node: usize, shape: Shape },
    #[error("backward called before forward")]
    NotEvaluated,
    #[error("node {0} does not belong to this tape")]
    UnknownNode(usize),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidEpsilon(f64),
}

/// Matrix shape as `(rows, cols)`. Scalars are `1x1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { rows: 1, cols: 1 };

    pub fn new(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// Panics if `data.len()` does not match the shape.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length must match shape");
        Tensor {
            shape: Shape::new(rows, cols),
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(1, 1, vec![v])
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn row(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::new(1, n, data)
    }

    pub fn column(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::new(n, 1, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape.cols + c]
    }

    /// Value of a `1x1` tensor. Panics otherwise.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape, Shape::SCALAR, "item() on non-scalar tensor");
        self.data[0]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf(String),
    Constant(Tensor),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// scalar node times tensor node
    ScaleBy(Var, Var),
    /// matrix plus a broadcast row vector
    AddRow(Var, Var),
    MatMul(Var, Var),
    Tanh(Var),
    Relu(Var),
    /// row-wise softmax
    Softmax(Var),
    Pick(Var, usize, usize),
    Sum(Var),
    SquaredNorm(Var),
    Mse(Var, Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Constant(_) => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::ScaleBy(..) => "scale_by",
            Op::AddRow(..) => "add_row",
            Op::MatMul(..) => "matmul",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Softmax(_) => "softmax",
            Op::Pick(..) => "pick",
            Op::Sum(_) => "sum",
            Op::SquaredNorm(_) => "squared_norm",
            Op::Mse(..) => "mse",
        }
    }
}

/// Append-only record of primitive operations.
///
/// Nodes are only ever pushed after their parents, so the node list is a
/// topological order and the backward pass is a single reverse scan.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    ops: Vec<Op>,
    leaves: BTreeMap<String, Var>,
    values: Option<Vec<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op) -> Var {
        self.values = None;
        self.ops.push(op);
        Var(self.ops.len() - 1)
    }

    /// Named input. Declaring the same name twice returns the same node.
    pub fn leaf(&mut self, name: &str) -> Var {
        if let Some(&v) = self.leaves.get(name) {
            return v;
        }
        let v = self.push(Op::Leaf(name.to_string()));
        self.leaves.insert(name.to_string(), v);
        v
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant(value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product of same-shape operands.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push(Op::Scale(a, c))
    }

    /// `s * a` where `s` is a scalar node.
    pub fn scale_by(&mut self, s: Var, a: Var) -> Var {
        self.push(Op::ScaleBy(s, a))
    }

    /// Adds the `1xC` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        self.push(Op::AddRow(a, r))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::MatMul(a, b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.push(Op::Tanh(a))
    }

    /// Rectifier with subgradient 0 at the origin.
    pub fn relu(&mut self, a: Var) -> Var {
        self.push(Op::Relu(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        self.push(Op::Softmax(a))
    }

    /// Scalar element `(row, col)` of `a`.
    pub fn pick(&mut self, a: Var, row: usize, col: usize) -> Var {
        self.push(Op::Pick(a, row, col))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push(Op::Sum(a))
    }

    pub fn squared_norm(&mut self, a: Var) -> Var {
        self.push(Op::SquaredNorm(a))
    }

    /// Mean of squared differences over all entries.
    pub fn mse(&mut self, pred: Var, target: Var) -> Var {
        self.push(Op::Mse(pred, target))
    }

    /// Inner product, built from `mul` and `sum`.
    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let p = self.mul(a, b);
        self.sum(p)
    }

    /// Names of all declared leaves, sorted.
    pub fn leaf_names(&self) -> impl Iterator<Item = &str> {
        self.leaves.keys().map(String::as_str)
    }

    /// Cached value of `v` from the last forward pass.
    pub fn value(&self, v: Var) -> Option<&Tensor> {
        self.values.as_ref().and_then(|vals| vals.get(v.0))
    }

    /// Evaluates every node and returns the value of the last one, which
    /// must be a scalar.
    pub fn forward(&mut self, bindings: &Bindings) -> Result<f64, AutodiffError> {
        let mut vals: Vec<Tensor> = Vec::with_capacity(self.ops.len());
        for (node, op) in self.ops.iter().enumerate() {
            let value = eval_node(node, op, &vals, bindings)?;
            if !value.is_finite() {
                return Err(AutodiffError::NonFinite { node, op: op.name() });
            }
            vals.push(value);
        }
        let root = match vals.last() {
            Some(t) if t.shape == Shape::SCALAR => t.data[0],
            Some(t) => {
                return Err(AutodiffError::NonScalarRoot {
                    node: vals.len() - 1,
                    shape: t.shape,
                })
            }
            None => 0.0,
        };
        self.values = Some(vals);
        Ok(root)
    }

    /// Gradient of the scalar `root` with respect to every leaf.
    ///
    /// Leaves that `root` does not depend on receive zero gradients.
    pub fn backward(&self, root: Var) -> Result<Gradients, AutodiffError> {
        let vals = self.values.as_ref().ok_or(AutodiffError::NotEvaluated)?;
        let root_val = vals.get(root.0).ok_or(AutodiffError::UnknownNode(root.0))?;
        if root_val.shape != Shape::SCALAR {
            return Err(AutodiffError::NonScalarRoot {
                node: root.0,
                shape: root_val.shape,
            });
        }

        let mut adj: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Tensor::scalar(1.0));

        for node in (0..=root.0).rev() {
            let Some(g) = adj[node].take() else { continue };
            let op = &self.ops[node];
            match op {
                Op::Leaf(_) | Op::Constant(_) => {
                    adj[node] = Some(g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, vals, *a, &g);
                    accumulate(&mut adj, vals, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, vals, *a, &g);
                    accumulate(&mut adj, vals, *b, &g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip(&vals[b.0], |g, b| g * b);
                    let gb = g.zip(&vals[a.0], |g, a| g * a);
                    accumulate(&mut adj, vals, *a, &ga);
                    accumulate(&mut adj, vals, *b, &gb);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut adj, vals, *a, &g.map(|v| v * c));
                }
                Op::ScaleBy(s, a) => {
                    let s_val = vals[s.0].data[0];
                    let gs: f64 = g.data.iter().zip(&vals[a.0].data).map(|(g, a)| g * a).sum();
                    accumulate(&mut adj, vals, *s, &Tensor::scalar(gs));
                    accumulate(&mut adj, vals, *a, &g.map(|v| v * s_val));
                }
                Op::AddRow(a, r) => {
                    let cols = g.shape.cols;
                    let mut gr = vec![0.0; cols];
                    for row in g.data.chunks(cols) {
                        for (acc, v) in gr.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut adj, vals, *a, &g);
                    accumulate(&mut adj, vals, *r, &Tensor::row(gr));
                }
                Op::MatMul(a, b) => {
                    let av = &vals[a.0];
                    let bv = &vals[b.0];
                    let ga = matmul_nt(&g, bv);
                    let gb = matmul_tn(av, &g);
                    accumulate(&mut adj, vals, *a, &ga);
                    accumulate(&mut adj, vals, *b, &gb);
                }
                Op::Tanh(a) => {
                    let ga = g.zip(&vals[node], |g, y| g * (1.0 - y * y));
                    accumulate(&mut adj, vals, *a, &ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip(&vals[a.0], |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut adj, vals, *a, &ga);
                }
                Op::Softmax(a) => {
                    let out = &vals[node];
                    let cols = out.shape.cols;
                    let mut ga = Tensor::zeros(out.shape);
                    for ((gs, ss), dst) in g
                        .data
                        .chunks(cols)
                        .zip(out.data.chunks(cols))
                        .zip(ga.data.chunks_mut(cols))
                    {
                        let inner: f64 = gs.iter().zip(ss).map(|(g, s)| g * s).sum();
                        for ((d, g), s) in dst.iter_mut().zip(gs).zip(ss) {
                            *d = s * (g - inner);
                        }
                    }
                    accumulate(&mut adj, vals, *a, &ga);
                }
                Op::Pick(a, r, c) => {
                    let shape = vals[a.0].shape;
                    let mut ga = Tensor::zeros(shape);
                    ga.data[r * shape.cols + c] = g.data[0];
                    accumulate(&mut adj, vals, *a, &ga);
                }
                Op::Sum(a) => {
                    let gv = g.data[0];
                    accumulate(&mut adj, vals, *a, &vals[a.0].map(|_| gv));
                }
                Op::SquaredNorm(a) => {
                    let gv = g.data[0];
                    accumulate(&mut adj, vals, *a, &vals[a.0].map(|x| 2.0 * gv * x));
                }
                Op::Mse(p, t) => {
                    let n = vals[p.0].data.len() as f64;
                    let k = 2.0 * g.data[0] / n;
                    let gp = vals[p.0].zip(&vals[t.0], |p, t| k * (p - t));
                    accumulate(&mut adj, vals, *t, &gp.map(|v| -v));
                    accumulate(&mut adj, vals, *p, &gp);
                }
            }
        }

        let grads = self
            .leaves
            .iter()
            .map(|(name, v)| {
                let g = match adj.get(v.0).and_then(Option::as_ref) {
                    Some(g) => g.clone(),
                    None => Tensor::zeros(vals[v.0].shape),
                };
                (name.clone(), g)
            })
            .collect();
        Ok(Gradients(grads))
    }
}

fn accumulate(adj: &mut [Option<Tensor>], vals: &[Tensor], target: Var, g: &Tensor) {
    debug_assert_eq!(vals[target.0].shape, g.shape);
    match &mut adj[target.0] {
        Some(acc) => acc.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}

fn same_shape(node: usize, op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), AutodiffError> {
    if a.shape != b.shape {
        return Err(AutodiffError::ShapeMismatch {
            node,
            op,
            lhs: a.shape,
            rhs: b.shape,
        });
    }
    Ok(())
}

fn eval_node(node: usize, op: &Op, vals: &[Tensor], bindings: &Bindings) -> Result<Tensor, AutodiffError> {
    let get = |v: &Var| vals.get(v.0).ok_or(AutodiffError::UnknownNode(v.0));
    let name = op.name();
    let out = match op {
        Op::Leaf(leaf) => bindings
            .get(leaf)
            .cloned()
            .ok_or_else(|| AutodiffError::UnboundLeaf(leaf.clone()))?,
        Op::Constant(t) => t.clone(),
        Op::Add(a, b) => {
            let (a, b) = (get(a)?, get(b)?);
            same_shape(node, name, a, b)?;
            a.zip(b, |x, y| x + y)
        }
        Op::Sub(a, b) => {
            let (a, b) = (get(a)?, get(b)?);
            same_shape(node, name, a, b)?;
            a.zip(b, |x, y| x - y)
        }
        Op::Mul(a, b) => {
            let (a, b) = (get(a)?, get(b)?);
            same_shape(node, name, a, b)?;
            a.zip(b, |x, y| x * y)
        }
        Op::Scale(a, c) => get(a)?.map(|x| x * c),
        Op::ScaleBy(s, a) => {
            let (s, a) = (get(s)?, get(a)?);
            if s.shape != Shape::SCALAR {
                return Err(AutodiffError::ShapeMismatch {
                    node,
                    op: name,
                    lhs: s.shape,
                    rhs: Shape::SCALAR,
                });
            }
            let k = s.data[0];
            a.map(|x| k * x)
        }
        Op::AddRow(a, r) => {
            let (a, r) = (get(a)?, get(r)?);
            if r.shape.rows != 1 || r.shape.cols != a.shape.cols {
                return Err(AutodiffError::ShapeMismatch {
                    node,
                    op: name,
                    lhs: a.shape,
                    rhs: r.shape,
                });
            }
            let mut out = a.clone();
            for row in out.data.chunks_mut(a.shape.cols) {
                for (x, b) in row.iter_mut().zip(&r.data) {
                    *x += b;
                }
            }
            out
        }
        Op::MatMul(a, b) => {
            let (a, b) = (get(a)?, get(b)?);
            if a.shape.cols != b.shape.rows {
                return Err(AutodiffError::ShapeMismatch {
                    node,
                    op: name,
                    lhs: a.shape,
                    rhs: b.shape,
                });
            }
            matmul(a, b)
        }
        Op::Tanh(a) => get(a)?.map(f64::tanh),
        Op::Relu(a) => get(a)?.map(|x| if x > 0.0 { x } else { 0.0 }),
        Op::Softmax(a) => {
            let a = get(a)?;
            let cols = a.shape.cols;
            let mut out = a.clone();
            for row in out.data.chunks_mut(cols) {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - m).exp();
                    z += *x;
                }
                for x in row.iter_mut() {
                    *x /= z;
                }
            }
            out
        }
        Op::Pick(a, r, c) => {
            let a = get(a)?;
            if *r >= a.shape.rows || *c >= a.shape.cols {
                return Err(AutodiffError::ShapeMismatch {
                    node,
                    op: name,
                    lhs: a.shape,
                    rhs: Shape::new(r + 1, c + 1),
                });
            }
            Tensor::scalar(a.get(*r, *c))
        }
        Op::Sum(a) => Tensor::scalar(get(a)?.data.iter().sum()),
        Op::SquaredNorm(a) => Tensor::scalar(get(a)?.data.iter().map(|x| x * x).sum()),
        Op::Mse(p, t) => {
            let (p, t) = (get(p)?, get(t)?);
            same_shape(node, name, p, t)?;
            let n = p.data.len().max(1) as f64;
            let s: f64 = p.data.iter().zip(&t.data).map(|(a, b)| (a - b) * (a - b)).sum();
            Tensor::scalar(s / n)
        }
    };
    Ok(out)
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.shape.rows, a.shape.cols, b.shape.cols);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(n, m, out)
}

/// `g * b^T`
fn matmul_nt(g: &Tensor, b: &Tensor) -> Tensor {
    let (n, m, k) = (g.shape.rows, g.shape.cols, b.shape.rows);
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let grow = &g.data[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b.data[p * m..(p + 1) * m];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::new(n, k, out)
}

/// `a^T * g`
fn matmul_tn(a: &Tensor, g: &Tensor) -> Tensor {
    let (n, k, m) = (a.shape.rows, a.shape.cols, g.shape.cols);
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let arow = &a.data[i * k..(i + 1) * k];
        let grow = &g.data[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    Tensor::new(k, m, out)
}

/// Leaf gradients keyed by leaf name.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(BTreeMap<String, Tensor>);

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor> {
        self.0
    }
}

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Leaf and flat coordinate where the maximum was attained.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares tape gradients against central finite differences.
///
/// `build` records the function on a fresh tape and returns its root. Every
/// coordinate of every bound leaf is perturbed by `±eps`; the relative error
/// of a coordinate is `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn grad_check<F>(build: F, point: &Bindings, eps: f64) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape) -> Var,
{
    if !(eps > 0.0) {
        return Err(AutodiffError::InvalidEpsilon(eps));
    }
    let mut tape = Tape::new();
    let root = build(&mut tape);
    tape.forward(point)?;
    let grads = tape.backward(root)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let mut probe = point.clone();
    for (name, analytic) in grads.iter() {
        for i in 0..analytic.data.len() {
            let base = point[name].data[i];
            probe.get_mut(name).unwrap().data[i] = base + eps;
            let fp = tape.forward(&probe)?;
            probe.get_mut(name).unwrap().data[i] = base - eps;
            let fm = tape.forward(&probe)?;
            probe.get_mut(name).unwrap().data[i] = base;

            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic.data[i];
            let denom = a.abs().max(numeric.abs()).max(1e-12);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.to_string(), i));
            }
        }
    }
    Ok(report)
}
