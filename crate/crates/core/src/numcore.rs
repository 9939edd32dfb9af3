//! Dense 2-D tensors with tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every operation as it is evaluated. Values live on the
//! tape and are addressed by [`TensorId`]; calling [`Tape::backward`] on a
//! scalar walks the tape in reverse and accumulates gradients into every
//! tensor that requires them. Repeated calls accumulate (they do not reset).
//!
//! Broadcasting is limited to adding a `1 x n` row to every row of a matrix.
//! The ReLU subgradient at 0 is 0.

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};
use thiserror::Error;

pub type Matrix = Array2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("row index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("backward requires a 1x1 tensor, got {0:?}")]
    NotScalar((usize, usize)),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Tensor {
    pub value: Matrix,
    pub requires_grad: bool,
    /// Accumulated gradient; allocated on the first backward pass that reaches it.
    pub grad: Option<Matrix>,
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    Add(TensorId, TensorId),
    AddRow(TensorId, TensorId),
    Relu(TensorId),
    Scale(TensorId, f64),
    RowSum(TensorId),
    Sum(TensorId),
    ConcatRows(Vec<TensorId>),
    SelectRows(TensorId, Arc<[usize]>),
    GatherSum(TensorId, Arc<Vec<Vec<usize>>>),
    CrossEntropy { logits: TensorId, labels: Vec<usize>, probs: Matrix },
    SquaredError { pred: TensorId, target: TensorId, factor: f64 },
}

#[derive(Debug, Clone)]
struct TapeNode {
    op: Op,
    tensor: Tensor,
}

/// Records operations in evaluation order, which is always a valid
/// topological order of the expression DAG.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

/// Sums in ascending order, so reordering rows cannot change a loss by even
/// one rounding step.
fn order_free_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn shape_check(op: &'static str, ok: bool, lhs: &Matrix, rhs: &Matrix) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch { op, lhs: lhs.dim(), rhs: rhs.dim() })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> TensorId {
        self.nodes.push(TapeNode { op, tensor: Tensor { value, requires_grad, grad: None } });
        TensorId(self.nodes.len() - 1)
    }

    fn rg(&self, id: TensorId) -> bool {
        self.nodes[id.0].tensor.requires_grad
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    pub fn value(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].tensor.value
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        self.nodes[id.0].tensor.shape()
    }

    /// Scalar value of a `1 x 1` tensor.
    pub fn scalar(&self, id: TensorId) -> f64 {
        self.value(id)[(0, 0)]
    }

    /// Gradient of `id`, or zeros if no backward pass has reached it.
    pub fn grad(&self, id: TensorId) -> Matrix {
        let t = &self.nodes[id.0].tensor;
        t.grad.clone().unwrap_or_else(|| Matrix::zeros(t.shape()))
    }

    pub fn take_grad(&mut self, id: TensorId) -> Option<Matrix> {
        self.nodes[id.0].tensor.grad.take()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.tensor.grad = None;
        }
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Matrix) -> TensorId {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Matrix) -> TensorId {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (self.value(a), self.value(b));
        shape_check("matmul", va.ncols() == vb.nrows(), va, vb)?;
        let out = va.dot(vb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), out, rg))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (self.value(a), self.value(b));
        shape_check("add", va.dim() == vb.dim(), va, vb)?;
        let out = va + vb;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), out, rg))
    }

    /// Adds the `1 x n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: TensorId, bias: TensorId) -> Result<TensorId> {
        let (va, vb) = (self.value(a), self.value(bias));
        shape_check("add_row", vb.nrows() == 1 && vb.ncols() == va.ncols(), va, vb)?;
        let out = va + vb;
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Op::AddRow(a, bias), out, rg))
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let out = self.value(a).mapv(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(Op::Relu(a), out, rg)
    }

    pub fn scale(&mut self, a: TensorId, factor: f64) -> TensorId {
        let out = self.value(a) * factor;
        let rg = self.rg(a);
        self.push(Op::Scale(a, factor), out, rg)
    }

    /// Sum over rows: `m x n -> 1 x n`. Zero rows give a zero row.
    pub fn row_sum(&mut self, a: TensorId) -> TensorId {
        let out = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        let rg = self.rg(a);
        self.push(Op::RowSum(a), out, rg)
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let out = Matrix::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(Op::Sum(a), out, rg)
    }

    /// Stacks tensors vertically. All inputs need the same column count.
    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let cols = parts.first().map(|&p| self.value(p).ncols()).unwrap_or(0);
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            shape_check("concat_rows", v.ncols() == cols, self.value(parts[0]), v)?;
            rows += v.nrows();
        }
        let mut out = Matrix::zeros((rows, cols));
        let mut r = 0;
        for &p in parts {
            let v = self.value(p);
            out.slice_mut(s![r..r + v.nrows(), ..]).assign(v);
            r += v.nrows();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::ConcatRows(parts.to_vec()), out, rg))
    }

    /// Picks rows by index (repeats allowed).
    pub fn select_rows(&mut self, a: TensorId, rows: impl Into<Arc<[usize]>>) -> Result<TensorId> {
        let rows: Arc<[usize]> = rows.into();
        let va = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= va.nrows()) {
            return Err(TensorError::IndexOutOfRange { index: bad, rows: va.nrows() });
        }
        let out = va.select(Axis(0), &rows);
        let rg = self.rg(a);
        Ok(self.push(Op::SelectRows(a, rows), out, rg))
    }

    /// Output row `r` is the sum of the input rows listed in `groups[r]`
    /// (a zero row when the list is empty).
    pub fn gather_sum(&mut self, a: TensorId, groups: Arc<Vec<Vec<usize>>>) -> Result<TensorId> {
        let va = self.value(a);
        let mut out = Matrix::zeros((groups.len(), va.ncols()));
        for (r, g) in groups.iter().enumerate() {
            let mut row = out.row_mut(r);
            for &src in g {
                if src >= va.nrows() {
                    return Err(TensorError::IndexOutOfRange { index: src, rows: va.nrows() });
                }
                row += &va.row(src);
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Op::GatherSum(a, groups), out, rg))
    }

    /// `-log softmax(logits)[label]` for a single `1 x k` row.
    pub fn softmax_cross_entropy(&mut self, logits: TensorId, label: usize) -> Result<TensorId> {
        let v = self.value(logits);
        if v.nrows() != 1 {
            return Err(TensorError::ShapeMismatch { op: "softmax_cross_entropy", lhs: v.dim(), rhs: (1, v.ncols()) });
        }
        self.cross_entropy(logits, &[label])
    }

    /// Sum over rows of the softmax cross-entropy of each row against its label.
    pub fn cross_entropy(&mut self, logits: TensorId, labels: &[usize]) -> Result<TensorId> {
        let v = self.value(logits);
        let (n, k) = v.dim();
        if labels.len() != n {
            return Err(TensorError::ShapeMismatch { op: "cross_entropy", lhs: (n, k), rhs: (labels.len(), 1) });
        }
        let mut probs = Matrix::zeros((n, k));
        let mut terms = Vec::with_capacity(n);
        for (r, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(TensorError::LabelOutOfRange { label, classes: k });
            }
            let row = v.row(r);
            let (arg, max) = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(ai, m), (i, &x)| if x > m { (i, x) } else { (ai, m) });
            // log(1 + rest) keeps full precision when one logit dominates.
            let rest: f64 = row
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != arg)
                .map(|(_, &x)| (x - max).exp())
                .sum();
            let log_z = rest.ln_1p();
            for c in 0..k {
                probs[(r, c)] = (row[c] - max - log_z).exp();
            }
            terms.push(-(row[label] - max - log_z));
        }
        let loss = order_free_sum(terms);
        let rg = self.rg(logits);
        Ok(self.push(
            Op::CrossEntropy { logits, labels: labels.to_vec(), probs },
            Matrix::from_elem((1, 1), loss),
            rg,
        ))
    }

    /// Mean of squared differences.
    pub fn mse(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId> {
        let n = self.value(pred).len();
        self.squared_error(pred, target, 1.0 / n as f64, "mse")
    }

    /// Sum of squared differences.
    pub fn sum_squared_error(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId> {
        self.squared_error(pred, target, 1.0, "sum_squared_error")
    }

    fn squared_error(&mut self, pred: TensorId, target: TensorId, factor: f64, op: &'static str) -> Result<TensorId> {
        let (vp, vt) = (self.value(pred), self.value(target));
        shape_check(op, vp.dim() == vt.dim(), vp, vt)?;
        let sse = order_free_sum(Zip::from(vp).and(vt).map_collect(|&p, &t| (p - t) * (p - t)).into_raw_vec_and_offset().0);
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Op::SquaredError { pred, target, factor }, Matrix::from_elem((1, 1), factor * sse), rg))
    }

    /// Accumulates `d loss / d x` into every tensor `x` that requires grad.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(TensorError::NotScalar(shape));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::ones((1, 1)));

        fn acc(grads: &mut [Option<Matrix>], id: TensorId, g: Matrix) {
            match &mut grads[id.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].tensor.requires_grad {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        acc(&mut grads, a, g.dot(&self.value(b).t()));
                    }
                    if self.rg(b) {
                        acc(&mut grads, b, self.value(a).t().dot(&g));
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        acc(&mut grads, a, g.clone());
                    }
                    if self.rg(b) {
                        acc(&mut grads, b, g.clone());
                    }
                }
                Op::AddRow(a, bias) => {
                    let (a, bias) = (*a, *bias);
                    if self.rg(bias) {
                        acc(&mut grads, bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.rg(a) {
                        acc(&mut grads, a, g.clone());
                    }
                }
                Op::Relu(a) => {
                    let a = *a;
                    let mut ga = g.clone();
                    Zip::from(&mut ga).and(self.value(a)).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    acc(&mut grads, a, ga);
                }
                Op::Scale(a, f) => {
                    let (a, f) = (*a, *f);
                    acc(&mut grads, a, &g * f);
                }
                Op::RowSum(a) => {
                    let a = *a;
                    let rows = self.value(a).nrows();
                    let ga = g.broadcast((rows, g.ncols())).expect("row broadcast").to_owned();
                    acc(&mut grads, a, ga);
                }
                Op::Sum(a) => {
                    let a = *a;
                    let ga = Matrix::from_elem(self.shape(a), g[(0, 0)]);
                    acc(&mut grads, a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut r = 0;
                    for p in parts.clone() {
                        let rows = self.value(p).nrows();
                        if self.rg(p) {
                            acc(&mut grads, p, g.slice(s![r..r + rows, ..]).to_owned());
                        }
                        r += rows;
                    }
                }
                Op::SelectRows(a, rows) => {
                    let (a, rows) = (*a, rows.clone());
                    let mut ga = Matrix::zeros(self.shape(a));
                    for (r, &src) in rows.iter().enumerate() {
                        let mut dst = ga.row_mut(src);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, a, ga);
                }
                Op::GatherSum(a, groups) => {
                    let (a, groups) = (*a, groups.clone());
                    let mut ga = Matrix::zeros(self.shape(a));
                    for (r, grp) in groups.iter().enumerate() {
                        for &src in grp {
                            let mut dst = ga.row_mut(src);
                            dst += &g.row(r);
                        }
                    }
                    acc(&mut grads, a, ga);
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let logits = *logits;
                    let mut ga = probs.clone();
                    for (r, &l) in labels.iter().enumerate() {
                        ga[(r, l)] -= 1.0;
                    }
                    ga *= g[(0, 0)];
                    acc(&mut grads, logits, ga);
                }
                Op::SquaredError { pred, target, factor } => {
                    let (pred, target) = (*pred, *target);
                    let mut diff = self.value(pred) - self.value(target);
                    diff *= 2.0 * factor * g[(0, 0)];
                    if self.rg(target) {
                        acc(&mut grads, target, -&diff);
                    }
                    if self.rg(pred) {
                        acc(&mut grads, pred, diff);
                    }
                }
            }
            let t = &mut self.nodes[i].tensor;
            match &mut t.grad {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }
}
