//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is a Wengert list: each primitive appends one node holding
//! its output value and the operand indices it needs for the backward
//! pass. Operands always precede their consumers, so a single reverse sweep
//! from the loss visits every node exactly once. Graphs are cheap and are
//! rebuilt for every forward pass; [`Graph::backward`] may be called once.
//!
//! ```
//! use feast::tensor::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
//! let loss = g.sum(x).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
//! ```

use super::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped to this floor before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    DivRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Square(usize),
    Exp(usize),
    Log(usize),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    MeanRows(usize),
    /// Saves the per-row normalizer.
    L2NormalizeRows(usize, Vec<f64>),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    /// Saves the per-row inverse standard deviation.
    LayerNormRows(usize, Vec<f64>),
    CrossEntropy(usize, Vec<usize>),
    Mse(usize, usize),
    SelectRows(usize, Vec<usize>),
    SelectCols(usize, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A dynamically built computation graph.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    consumed: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, operands: &[usize]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = operands.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn row_operand(&self, op: &'static str, a: Var, row: Var) -> Result<()> {
        let (ra, ca) = self.value(a).shape();
        let (rr, cr) = self.value(row).shape();
        if rr != 1 || cr != ca {
            return Err(Error::shape(op, format!("({ra}, {ca}) with row ({rr}, {cr})")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a.0, b.0), &[a.0, b.0])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push("transpose", value, Op::Transpose(a.0), &[a.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push("add", value, Op::Add(a.0, b.0), &[a.0, b.0])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push("sub", value, Op::Sub(a.0, b.0), &[a.0, b.0])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push("mul", value, Op::Mul(a.0, b.0), &[a.0, b.0])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x / y);
        self.push("div", value, Op::Div(a.0, b.0), &[a.0, b.0])
    }

    /// Adds a `1×n` row to every row of an `m×n` tensor.
    pub fn add_bias(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_operand("add_bias", a, row)?;
        let value = self.broadcast_row(a, row, |x, r| x + r);
        self.push("add_bias", value, Op::AddRow(a.0, row.0), &[a.0, row.0])
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_operand("mul_row", a, row)?;
        let value = self.broadcast_row(a, row, |x, r| x * r);
        self.push("mul_row", value, Op::MulRow(a.0, row.0), &[a.0, row.0])
    }

    /// Divides every row of `a` elementwise by `row`.
    pub fn div_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_operand("div_row", a, row)?;
        let value = self.broadcast_row(a, row, |x, r| x / r);
        self.push("div_row", value, Op::DivRow(a.0, row.0), &[a.0, row.0])
    }

    fn broadcast_row(&self, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, rv) = (self.value(a), self.value(row));
        let mut out = av.clone();
        let cols = av.cols();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            *v = f(*v, rv.data()[k % cols]);
        }
        out
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * c);
        self.push("scale", value, Op::Scale(a.0, c), &[a.0])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x + c);
        self.push("add_scalar", value, Op::AddScalar(a.0), &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push("relu", value, Op::Relu(a.0), &[a.0])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x * x);
        self.push("square", value, Op::Square(a.0), &[a.0])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::exp);
        self.push("exp", value, Op::Exp(a.0), &[a.0])
    }

    /// Natural log with the argument clamped at [`LOG_CLAMP`].
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(LOG_CLAMP).ln());
        self.push("log", value, Op::Log(a.0), &[a.0])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push("sum", value, Op::Sum(a.0), &[a.0])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::degenerate("mean", "empty tensor"));
        }
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        self.push("mean", value, Op::Mean(a.0), &[a.0])
    }

    /// Column sums as a `1×n` row.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let value = column_sums(self.value(a));
        self.push("sum_rows", value, Op::SumRows(a.0), &[a.0])
    }

    /// Column means as a `1×n` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rows() == 0 {
            return Err(Error::degenerate("mean_rows", "no rows"));
        }
        let m = t.rows() as f64;
        let value = column_sums(t).map(|x| x / m);
        self.push("mean_rows", value, Op::MeanRows(a.0), &[a.0])
    }

    /// Scales each row to unit Euclidean norm. A row with norm at or below
    /// `1e-12` is a degenerate-input error.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let mut norms = Vec::with_capacity(t.rows());
        for r in 0..t.rows() {
            let n = t.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if n <= 1e-12 {
                return Err(Error::degenerate(
                    "l2_normalize_rows",
                    format!("row {r} has norm {n:e}"),
                ));
            }
            norms.push(n);
        }
        self.push_normalized(a, norms)
    }

    /// Like [`Graph::l2_normalize_rows`] but divides by `sqrt(|x|^2 + eps^2)`,
    /// so an all-zero row maps to zeros instead of failing.
    pub fn l2_normalize_rows_eps(&mut self, a: Var, eps: f64) -> Result<Var> {
        let t = self.value(a);
        let norms = (0..t.rows())
            .map(|r| (t.row(r).iter().map(|v| v * v).sum::<f64>() + eps * eps).sqrt())
            .collect();
        self.push_normalized(a, norms)
    }

    fn push_normalized(&mut self, a: Var, norms: Vec<f64>) -> Result<Var> {
        let mut value = self.value(a).clone();
        let cols = value.cols();
        for (r, n) in norms.iter().enumerate() {
            for v in &mut value.data_mut()[r * cols..(r + 1) * cols] {
                *v /= n;
            }
        }
        self.push("l2_normalize_rows", value, Op::L2NormalizeRows(a.0, norms), &[a.0])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = softmax_rows(self.value(a));
        self.push("softmax_rows", value, Op::SoftmaxRows(a.0), &[a.0])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let mut value = t.clone();
        let cols = t.cols();
        for r in 0..t.rows() {
            let lse = log_sum_exp(t.row(r));
            for v in &mut value.data_mut()[r * cols..(r + 1) * cols] {
                *v -= lse;
            }
        }
        self.push("log_softmax_rows", value, Op::LogSoftmaxRows(a.0), &[a.0])
    }

    /// Per-row standardization (zero mean, unit variance) without affine terms.
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Result<Var> {
        let t = self.value(a);
        let cols = t.cols();
        if cols == 0 {
            return Err(Error::degenerate("layer_norm_rows", "zero columns"));
        }
        let mut value = t.clone();
        let mut inv_std = Vec::with_capacity(t.rows());
        for r in 0..t.rows() {
            let row = t.row(r);
            let mu = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for v in &mut value.data_mut()[r * cols..(r + 1) * cols] {
                *v = (*v - mu) * inv;
            }
            inv_std.push(inv);
        }
        self.push("layer_norm_rows", value, Op::LayerNormRows(a.0, inv_std), &[a.0])
    }

    /// Mean over rows of `-ln(max(probs[i, label_i], 1e-12))`.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let p = self.value(probs);
        if labels.len() != p.rows() || p.rows() == 0 {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} labels for {} rows", labels.len(), p.rows()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= p.cols()) {
            return Err(Error::Index {
                op: "cross_entropy",
                detail: format!("label {bad} outside [0, {})", p.cols()),
            });
        }
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -p.get(i, l).max(LOG_CLAMP).ln())
            .sum();
        let value = Tensor::scalar(total / labels.len() as f64);
        self.push(
            "cross_entropy",
            value,
            Op::CrossEntropy(probs.0, labels.to_vec()),
            &[probs.0],
        )
    }

    /// Mean of squared elementwise differences.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.is_empty() {
            return Err(Error::degenerate("mse", "empty tensors"));
        }
        let s: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let value = Tensor::scalar(s / ta.len() as f64);
        self.push("mse", value, Op::Mse(a.0, b.0), &[a.0, b.0])
    }

    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * t.cols());
        for &i in idx {
            if i >= t.rows() {
                return Err(Error::Index {
                    op: "select_rows",
                    detail: format!("row {i} of {}", t.rows()),
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::from_vec(idx.len(), t.cols(), data)?;
        self.push("select_rows", value, Op::SelectRows(a.0, idx.to_vec()), &[a.0])
    }

    pub fn select_cols(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&c| c >= t.cols()) {
            return Err(Error::Index {
                op: "select_cols",
                detail: format!("column {bad} of {}", t.cols()),
            });
        }
        let mut value = Tensor::zeros(t.rows(), idx.len());
        for r in 0..t.rows() {
            for (k, &c) in idx.iter().enumerate() {
                value.set(r, k, t.get(r, c));
            }
        }
        self.push("select_cols", value, Op::SelectCols(a.0, idx.to_vec()), &[a.0])
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    /// A graph supports a single backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::State("backward already ran on this graph".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::State("loss is not a node of this graph".into()));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient of the last backward loss with respect to a tracked leaf.
    /// Leaves unreachable from the loss get an all-zero gradient.
    pub fn grad(&self, v: Var) -> Result<Tensor> {
        if !self.consumed {
            return Err(Error::State("gradient requested before backward".into()));
        }
        let node = &self.nodes[v.0];
        if !node.requires_grad || !matches!(node.op, Op::Leaf) {
            return Err(Error::State(format!(
                "node {} is not a gradient-tracked leaf",
                v.0
            )));
        }
        Ok(self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(node.value.rows(), node.value.cols())))
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut send = |j: usize, contrib: Tensor| {
            if !self.nodes[j].requires_grad {
                return;
            }
            match &mut grads[j] {
                Some(acc) => acc.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |j: usize| &self.nodes[j].value;
        let need = |j: usize| self.nodes[j].requires_grad;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if need(*a) {
                    send(*a, g.matmul(&val(*b).transpose()).expect("matmul grad"));
                }
                if need(*b) {
                    send(*b, val(*a).transpose().matmul(g).expect("matmul grad"));
                }
            }
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                send(*a, g.zip_map(val(*b), |x, y| x * y));
                send(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                send(*a, g.zip_map(bv, |x, y| x / y));
                if need(*b) {
                    let mut gb = g.zip_map(av, |x, y| -x * y);
                    for (v, d) in gb.data_mut().iter_mut().zip(bv.data()) {
                        *v /= d * d;
                    }
                    send(*b, gb);
                }
            }
            Op::AddRow(a, r) => {
                send(*a, g.clone());
                if need(*r) {
                    send(*r, column_sums(g));
                }
            }
            Op::MulRow(a, r) => {
                let (av, rv) = (val(*a), val(*r));
                let cols = av.cols();
                if need(*a) {
                    let mut ga = g.clone();
                    for (k, v) in ga.data_mut().iter_mut().enumerate() {
                        *v *= rv.data()[k % cols];
                    }
                    send(*a, ga);
                }
                if need(*r) {
                    send(*r, column_sums(&g.zip_map(av, |x, y| x * y)));
                }
            }
            Op::DivRow(a, r) => {
                let (av, rv) = (val(*a), val(*r));
                let cols = av.cols();
                if need(*a) {
                    let mut ga = g.clone();
                    for (k, v) in ga.data_mut().iter_mut().enumerate() {
                        *v /= rv.data()[k % cols];
                    }
                    send(*a, ga);
                }
                if need(*r) {
                    let mut t = g.zip_map(av, |x, y| -x * y);
                    for (k, v) in t.data_mut().iter_mut().enumerate() {
                        let d = rv.data()[k % cols];
                        *v /= d * d;
                    }
                    send(*r, column_sums(&t));
                }
            }
            Op::Scale(a, c) => send(*a, g.map(|x| x * c)),
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::Relu(a) => send(*a, g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 })),
            Op::Square(a) => send(*a, g.zip_map(val(*a), |x, y| 2.0 * x * y)),
            Op::Exp(a) => send(*a, g.zip_map(out, |x, y| x * y)),
            Op::Log(a) => send(
                *a,
                g.zip_map(val(*a), |x, y| if y > LOG_CLAMP { x / y } else { 0.0 }),
            ),
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                send(*a, Tensor::full(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                send(*a, Tensor::full(r, c, g.item() / (r * c) as f64));
            }
            Op::SumRows(a) | Op::MeanRows(a) => {
                let (r, c) = val(*a).shape();
                let scale = if matches!(node.op, Op::MeanRows(_)) {
                    1.0 / r as f64
                } else {
                    1.0
                };
                let mut ga = Tensor::zeros(r, c);
                for row in 0..r {
                    for col in 0..c {
                        ga.set(row, col, g.get(0, col) * scale);
                    }
                }
                send(*a, ga);
            }
            Op::L2NormalizeRows(a, norms) => {
                let cols = out.cols();
                let mut ga = g.clone();
                for (r, n) in norms.iter().enumerate() {
                    let y = out.row(r);
                    let gy = g.row(r);
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for (k, v) in ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                        *v = (gy[k] - y[k] * dot) / n;
                    }
                }
                send(*a, ga);
            }
            Op::SoftmaxRows(a) => {
                let cols = out.cols();
                let mut ga = g.clone();
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gy = g.row(r);
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for (k, v) in ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                        *v = y[k] * (gy[k] - dot);
                    }
                }
                send(*a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let cols = out.cols();
                let mut ga = g.clone();
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gy = g.row(r);
                    let total: f64 = gy.iter().sum();
                    for (k, v) in ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                        *v = gy[k] - y[k].exp() * total;
                    }
                }
                send(*a, ga);
            }
            Op::LayerNormRows(a, inv_std) => {
                let cols = out.cols();
                let n = cols as f64;
                let mut ga = g.clone();
                for (r, inv) in inv_std.iter().enumerate() {
                    let y = out.row(r);
                    let gy = g.row(r);
                    let mean_g = gy.iter().sum::<f64>() / n;
                    let mean_gy = gy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
                    for (k, v) in ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                        *v = inv * (gy[k] - mean_g - y[k] * mean_gy);
                    }
                }
                send(*a, ga);
            }
            Op::CrossEntropy(p, labels) => {
                let pv = val(*p);
                let m = labels.len() as f64;
                let mut gp = Tensor::zeros(pv.rows(), pv.cols());
                for (i, &l) in labels.iter().enumerate() {
                    let q = pv.get(i, l);
                    if q > LOG_CLAMP {
                        gp.set(i, l, -g.item() / (m * q));
                    }
                }
                send(*p, gp);
            }
            Op::Mse(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let k = 2.0 * g.item() / av.len() as f64;
                let ga = av.zip_map(bv, |x, y| k * (x - y));
                if need(*b) {
                    send(*b, ga.map(|x| -x));
                }
                send(*a, ga);
            }
            Op::SelectRows(a, idx) => {
                let (r, c) = val(*a).shape();
                let mut ga = Tensor::zeros(r, c);
                for (k, &src) in idx.iter().enumerate() {
                    for col in 0..c {
                        let cur = ga.get(src, col);
                        ga.set(src, col, cur + g.get(k, col));
                    }
                }
                send(*a, ga);
            }
            Op::SelectCols(a, idx) => {
                let (r, c) = val(*a).shape();
                let mut ga = Tensor::zeros(r, c);
                for row in 0..r {
                    for (k, &src) in idx.iter().enumerate() {
                        let cur = ga.get(row, src);
                        ga.set(row, src, cur + g.get(row, k));
                    }
                }
                send(*a, ga);
            }
        }
    }
}

fn column_sums(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, t.cols());
    for r in 0..t.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    out
}

/// `ln(sum(exp(xs)))` computed with the max-subtraction trick.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_rows(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    let cols = t.cols();
    for r in 0..t.rows() {
        let row = t.row(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slot = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let mut total = 0.0;
        for (o, x) in slot.iter_mut().zip(row) {
            *o = (x - m).exp();
            total += *o;
        }
        for o in slot.iter_mut() {
            *o /= total;
        }
    }
    out
}
