use std::cell::{Ref, RefCell};
use std::sync::Arc;

use super::{kernels, CsrMatrix, Matrix, SparsityPattern, TensorError};

/// Lower clamp applied to probabilities inside the log of [`Tensor::nll`].
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EwiseOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Ewise(EwiseOp, usize, usize),
    Scale(usize, f64),
    OneMinus(usize),
    Act(Activation, usize),
    ConcatCols(Vec<usize>),
    MaskedSoftmax(usize, Arc<SparsityPattern>),
    SoftmaxRows(usize),
    SparseAttention { input: usize, support: Arc<SparsityPattern>, weights: Vec<f64>, scale: f64 },
    SpMM(Arc<CsrMatrix>, usize),
    MulConst(usize, Arc<Matrix>),
    Sum(usize),
    Nll { input: usize, targets: Arc<[usize]>, rows: Arc<[usize]> },
}

struct Node {
    value: Arc<Matrix>,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of operations. Node ids are assigned in creation order,
/// so every node's inputs precede it.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor#{} {:?}", self.id, self.shape())
    }
}

fn finite(op: &'static str, m: Matrix) -> Result<Matrix, TensorError> {
    if m.all_finite() {
        Ok(m)
    } else {
        Err(TensorError::NonFinite { op })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, requires_grad: bool, op: Op) -> Tensor<'_> {
        self.push_shared(Arc::new(value), requires_grad, op)
    }

    fn push_shared(&self, value: Arc<Matrix>, requires_grad: bool, op: Op) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, grad: None, requires_grad, op });
        Tensor { tape: self, id: nodes.len() - 1 }
    }

    /// Trainable leaf initialised with a copy of `value`.
    pub fn param(&self, value: &Matrix) -> Tensor<'_> {
        self.push(value.clone(), true, Op::Leaf)
    }

    pub fn leaf(&self, value: Matrix, requires_grad: bool) -> Tensor<'_> {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Non-trainable leaf.
    pub fn constant(&self, value: Matrix) -> Tensor<'_> {
        self.push(value, false, Op::Leaf)
    }

    /// Non-trainable leaf sharing storage with the caller.
    pub fn constant_shared(&self, value: Arc<Matrix>) -> Tensor<'_> {
        self.push_shared(value, false, Op::Leaf)
    }

    fn value_of(&self, id: usize) -> Arc<Matrix> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self, t: Tensor<'_>) -> Option<Matrix> {
        self.nodes.borrow()[t.id].grad.clone()
    }

    /// Clears every accumulated leaf gradient.
    pub fn zero_grads(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            node.grad = None;
        }
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate across
    /// calls until [`Tape::zero_grads`].
    pub fn backward(&self, loss: Tensor<'_>) -> Result<(), TensorError> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(TensorError::ForeignTensor);
        }
        let (rows, cols) = loss.shape();
        if (rows, cols) != (1, 1) {
            return Err(TensorError::NonScalarLoss { rows, cols });
        }
        let mut leaf_grads: Vec<(usize, Matrix)> = Vec::new();
        {
            let nodes = self.nodes.borrow();
            let mut grads: Vec<Option<Matrix>> = Vec::new();
            grads.resize_with(loss.id + 1, || None);
            grads[loss.id] = Some(Matrix::filled(1, 1, 1.0));
            for id in (0..=loss.id).rev() {
                let Some(g) = grads[id].take() else { continue };
                let node = &nodes[id];
                if !node.requires_grad {
                    continue;
                }
                if let Op::Leaf = node.op {
                    leaf_grads.push((id, g));
                } else {
                    backprop(&nodes, id, &g, &mut grads);
                }
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        for (id, g) in leaf_grads {
            match &mut nodes[id].grad {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }
}

/// Gradient slot for `id`, allocated on first use; `None` when the node
/// does not need a gradient.
fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Matrix>], id: usize) -> Option<&'a mut Matrix> {
    if !nodes[id].requires_grad {
        return None;
    }
    let (r, c) = nodes[id].value.shape();
    Some(grads[id].get_or_insert_with(|| Matrix::zeros(r, c)))
}

fn backprop(nodes: &[Node], id: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                kernels::gemm_nt(g, &nodes[*b].value, ga);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                kernels::gemm_tn(&nodes[*a].value, g, gb);
            }
        }
        Op::MatMulNt(a, b) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                kernels::gemm_nn(g, &nodes[*b].value, ga);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                // aᵀ·g skips the zeros of `a`, which is the sparse side.
                let av = &nodes[*a].value;
                let mut tmp = Matrix::zeros(av.cols(), g.cols());
                kernels::gemm_tn(av, g, &mut tmp);
                gb.add_assign(&tmp.transpose());
            }
        }
        Op::Ewise(op, a, b) => {
            let (a, b) = (*a, *b);
            match op {
                EwiseOp::Add | EwiseOp::Sub => {
                    let sign = if *op == EwiseOp::Add { 1.0 } else { -1.0 };
                    if let Some(ga) = slot(nodes, grads, a) {
                        ga.add_assign(g);
                    }
                    if let Some(gb) = slot(nodes, grads, b) {
                        for (o, &x) in gb.data_mut().iter_mut().zip(g.data()) {
                            *o += sign * x;
                        }
                    }
                }
                EwiseOp::Mul => {
                    let (av, bv) = (Arc::clone(&nodes[a].value), Arc::clone(&nodes[b].value));
                    if let Some(ga) = slot(nodes, grads, a) {
                        for ((o, &x), &y) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                            *o += x * y;
                        }
                    }
                    if let Some(gb) = slot(nodes, grads, b) {
                        for ((o, &x), &y) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                            *o += x * y;
                        }
                    }
                }
            }
        }
        Op::Scale(a, s) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (o, &x) in ga.data_mut().iter_mut().zip(g.data()) {
                    *o += s * x;
                }
            }
        }
        Op::OneMinus(a) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (o, &x) in ga.data_mut().iter_mut().zip(g.data()) {
                    *o -= x;
                }
            }
        }
        Op::Act(kind, a) => {
            let input = Arc::clone(&nodes[*a].value);
            if let Some(ga) = slot(nodes, grads, *a) {
                let it = ga.data_mut().iter_mut().zip(g.data()).zip(out.data()).zip(input.data());
                match kind {
                    Activation::Sigmoid => it.for_each(|(((o, &gx), &y), _)| *o += gx * y * (1.0 - y)),
                    Activation::Tanh => it.for_each(|(((o, &gx), &y), _)| *o += gx * (1.0 - y * y)),
                    Activation::Relu => it.for_each(|(((o, &gx), _), &x)| {
                        if x > 0.0 {
                            *o += gx
                        }
                    }),
                }
            }
        }
        Op::ConcatCols(parts) => {
            let mut offset = 0;
            for &p in parts {
                let width = nodes[p].value.cols();
                if let Some(gp) = slot(nodes, grads, p) {
                    for r in 0..g.rows() {
                        let src = &g.row(r)[offset..offset + width];
                        for (o, &x) in gp.row_mut(r).iter_mut().zip(src) {
                            *o += x;
                        }
                    }
                }
                offset += width;
            }
        }
        Op::MaskedSoftmax(a, pattern) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for r in 0..out.rows() {
                    let cols = pattern.row(r);
                    let dot: f64 = cols.iter().map(|&c| g.get(r, c) * out.get(r, c)).sum();
                    for &c in cols {
                        let y = out.get(r, c);
                        ga.set(r, c, ga.get(r, c) + y * (g.get(r, c) - dot));
                    }
                }
            }
        }
        Op::SoftmaxRows(a) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *o += yv * (gv - dot);
                    }
                }
            }
        }
        Op::SparseAttention { input, support, weights, scale } => {
            let h = Arc::clone(&nodes[*input].value);
            if let Some(gh) = slot(nodes, grads, *input) {
                attention_backward(&h, support, weights, *scale, g, gh);
            }
        }
        Op::SpMM(a, b) => {
            if let Some(gb) = slot(nodes, grads, *b) {
                a.mul_dense_transposed_into(g, gb);
            }
        }
        Op::MulConst(a, c) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for ((o, &x), &m) in ga.data_mut().iter_mut().zip(g.data()).zip(c.data()) {
                    *o += x * m;
                }
            }
        }
        Op::Sum(a) => {
            let s = g.get(0, 0);
            if let Some(ga) = slot(nodes, grads, *a) {
                ga.data_mut().iter_mut().for_each(|o| *o += s);
            }
        }
        Op::Nll { input, targets, rows } => {
            let s = g.get(0, 0);
            let probs = Arc::clone(&nodes[*input].value);
            if let Some(ga) = slot(nodes, grads, *input) {
                for &r in rows.iter() {
                    let t = targets[r];
                    let p = probs.get(r, t);
                    if p > LOG_CLAMP {
                        ga.set(r, t, ga.get(r, t) - s / p);
                    }
                }
            }
        }
    }
}

fn attention_backward(h: &Matrix, support: &SparsityPattern, weights: &[f64], scale: f64, g: &Matrix, gh: &mut Matrix) {
    let d = h.cols();
    let mut gscore = vec![0.0; support.nnz()];
    for i in 0..h.rows() {
        let range = support.row_range(i);
        let cols = support.row(i);
        let gi = g.row(i);
        // d loss / d weight_ij = g_i · h_j
        let mut mean = 0.0;
        for (k, &j) in cols.iter().enumerate() {
            let gw: f64 = gi.iter().zip(h.row(j)).map(|(a, b)| a * b).sum();
            gscore[range.start + k] = gw;
            mean += weights[range.start + k] * gw;
        }
        for k in range.clone() {
            gscore[k] = weights[k] * (gscore[k] - mean);
        }
        // aggregation path: z_i = Σ_j w_ij h_j
        for (k, &j) in cols.iter().enumerate() {
            let w = weights[range.start + k];
            let row = &mut gh.data_mut()[j * d..(j + 1) * d];
            for (o, &x) in row.iter_mut().zip(gi) {
                *o += w * x;
            }
        }
    }
    // score path: s_ij = scale · h_i · h_j
    for i in 0..h.rows() {
        let range = support.row_range(i);
        for (k, &j) in support.row(i).iter().enumerate() {
            let gs = gscore[range.start + k] * scale;
            if gs == 0.0 {
                continue;
            }
            let (hi, hj) = (h.row(i).to_vec(), h.row(j).to_vec());
            for (o, &x) in gh.row_mut(i).iter_mut().zip(&hj) {
                *o += gs * x;
            }
            for (o, &x) in gh.row_mut(j).iter_mut().zip(&hi) {
                *o += gs * x;
            }
        }
    }
}

/// Softmax over the listed positions of one row, max-stabilised over that
/// support only.
fn softmax_support(values: impl Iterator<Item = f64> + Clone, out: &mut [f64]) {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(values) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

impl<'t> Tensor<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Arc<Matrix> {
        self.tape.value_of(self.id)
    }

    /// Borrow of the stored value; release it before recording new ops.
    pub fn value_ref(&self) -> Ref<'t, Matrix> {
        Ref::map(self.tape.nodes.borrow(), |n| &*n[self.id].value)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn grad(&self) -> Option<Matrix> {
        self.tape.grad(*self)
    }

    fn check_tape(&self, other: &Tensor<'_>) -> Result<(), TensorError> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::ForeignTensor)
        }
    }

    fn unary(&self, op: Op, value: Matrix, name: &'static str) -> Result<Tensor<'t>, TensorError> {
        let value = finite(name, value)?;
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(value, rg, op))
    }

    fn binary(&self, other: &Tensor<'_>, op: Op, value: Matrix, name: &'static str) -> Result<Tensor<'t>, TensorError> {
        let value = finite(name, value)?;
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, rg, op))
    }

    /// `self · other`
    pub fn matmul(&self, other: &Tensor<'_>) -> Result<Tensor<'t>, TensorError> {
        self.check_tape(other)?;
        let (a, b) = (self.value(), other.value());
        if a.cols() != b.rows() {
            return Err(TensorError::shape("matmul", a.shape(), b.shape()));
        }
        let mut out = Matrix::zeros(a.rows(), b.cols());
        kernels::gemm_nn(&a, &b, &mut out);
        self.binary(other, Op::MatMul(self.id, other.id), out, "matmul")
    }

    /// `self · otherᵀ`, the shape of every linear layer `X Wᵀ`.
    pub fn matmul_t(&self, other: &Tensor<'_>) -> Result<Tensor<'t>, TensorError> {
        self.check_tape(other)?;
        let (a, b) = (self.value(), other.value());
        if a.cols() != b.cols() {
            return Err(TensorError::shape("matmul_t", a.shape(), b.shape()));
        }
        let mut out = Matrix::zeros(a.rows(), b.rows());
        kernels::gemm_nt(&a, &b, &mut out);
        self.binary(other, Op::MatMulNt(self.id, other.id), out, "matmul_t")
    }

    pub fn ewise(&self, op: EwiseOp, other: &Tensor<'_>) -> Result<Tensor<'t>, TensorError> {
        self.check_tape(other)?;
        let (a, b) = (self.value(), other.value());
        let name = match op {
            EwiseOp::Add => "add",
            EwiseOp::Sub => "sub",
            EwiseOp::Mul => "mul",
        };
        if a.shape() != b.shape() {
            return Err(TensorError::shape(name, a.shape(), b.shape()));
        }
        let f: fn(f64, f64) -> f64 = match op {
            EwiseOp::Add => |x, y| x + y,
            EwiseOp::Sub => |x, y| x - y,
            EwiseOp::Mul => |x, y| x * y,
        };
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Matrix::from_vec(a.rows(), a.cols(), data)?;
        self.binary(other, Op::Ewise(op, self.id, other.id), out, name)
    }

    pub fn add(&self, other: &Tensor<'_>) -> Result<Tensor<'t>, TensorError> {
        self.ewise(EwiseOp::Add, other)
    }

    pub fn sub(&self, other: &Tensor<'_>) -> Result<Tensor<'t>, TensorError> {
        self.ewise(EwiseOp::Sub, other)
    }

    pub fn mul(&self, other: &Tensor<'_>) -> Result<Tensor<'t>, TensorError> {
        self.ewise(EwiseOp::Mul, other)
    }

    pub fn scale(&self, s: f64) -> Result<Tensor<'t>, TensorError> {
        let a = self.value();
        let out = Matrix::from_vec(a.rows(), a.cols(), a.data().iter().map(|x| x * s).collect())?;
        self.unary(Op::Scale(self.id, s), out, "scale")
    }

    /// `1 − self`
    pub fn one_minus(&self) -> Result<Tensor<'t>, TensorError> {
        let a = self.value();
        let out = Matrix::from_vec(a.rows(), a.cols(), a.data().iter().map(|x| 1.0 - x).collect())?;
        self.unary(Op::OneMinus(self.id), out, "one_minus")
    }

    pub fn activation(&self, kind: Activation) -> Result<Tensor<'t>, TensorError> {
        let a = self.value();
        let out = Matrix::from_vec(a.rows(), a.cols(), a.data().iter().map(|&x| kind.apply(x)).collect())?;
        self.unary(Op::Act(kind, self.id), out, "activation")
    }

    pub fn sigmoid(&self) -> Result<Tensor<'t>, TensorError> {
        self.activation(Activation::Sigmoid)
    }

    pub fn tanh(&self) -> Result<Tensor<'t>, TensorError> {
        self.activation(Activation::Tanh)
    }

    pub fn relu(&self) -> Result<Tensor<'t>, TensorError> {
        self.activation(Activation::Relu)
    }

    /// Column-wise concatenation in argument order.
    pub fn concat_cols(parts: &[Tensor<'t>]) -> Result<Tensor<'t>, TensorError> {
        let first = parts.first().ok_or(TensorError::EmptyInput { op: "concat_cols" })?;
        let tape = first.tape;
        let values: Vec<Arc<Matrix>> = parts.iter().map(|p| p.value()).collect();
        let rows = values[0].rows();
        for (p, v) in parts.iter().zip(&values) {
            first.check_tape(p)?;
            if v.rows() != rows {
                return Err(TensorError::shape("concat_cols", values[0].shape(), v.shape()));
            }
        }
        let cols: usize = values.iter().map(|v| v.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for v in &values {
                data.extend_from_slice(v.row(r));
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = tape.requires(&ids);
        Ok(tape.push(Matrix::from_vec(rows, cols, data)?, rg, Op::ConcatCols(ids)))
    }

    /// Row-wise softmax restricted to the positions in `mask`; entries off
    /// the mask are exactly zero.
    pub fn masked_softmax_rows(&self, mask: &Arc<SparsityPattern>) -> Result<Tensor<'t>, TensorError> {
        let a = self.value();
        if a.shape() != mask.shape() {
            return Err(TensorError::shape("masked_softmax_rows", a.shape(), mask.shape()));
        }
        let mut out = Matrix::zeros(a.rows(), a.cols());
        let mut buf = Vec::new();
        for r in 0..a.rows() {
            let cols = mask.row(r);
            if cols.is_empty() {
                return Err(TensorError::DegenerateRow { row: r });
            }
            buf.resize(cols.len(), 0.0);
            softmax_support(cols.iter().map(|&c| a.get(r, c)), &mut buf);
            for (&c, &w) in cols.iter().zip(&buf) {
                out.set(r, c, w);
            }
        }
        self.unary(Op::MaskedSoftmax(self.id, Arc::clone(mask)), out, "masked_softmax_rows")
    }

    /// Full row-wise softmax, max-stabilised.
    pub fn softmax_rows(&self) -> Result<Tensor<'t>, TensorError> {
        let a = self.value();
        let mut out = Matrix::zeros(a.rows(), a.cols());
        for r in 0..a.rows() {
            softmax_support(a.row(r).iter().copied(), out.row_mut(r));
        }
        self.unary(Op::SoftmaxRows(self.id), out, "softmax_rows")
    }

    /// Fused `softmax_support(scale · H Hᵀ) · H`, evaluated only on the
    /// positions of `support`. Memory is linear in the support size.
    pub fn sparse_self_attention(&self, support: &Arc<SparsityPattern>, scale: f64) -> Result<Tensor<'t>, TensorError> {
        let h = self.value();
        let n = h.rows();
        if support.shape() != (n, n) {
            return Err(TensorError::shape("sparse_self_attention", h.shape(), support.shape()));
        }
        let mut weights = vec![0.0; support.nnz()];
        let mut out = Matrix::zeros(n, h.cols());
        for i in 0..n {
            let cols = support.row(i);
            if cols.is_empty() {
                return Err(TensorError::DegenerateRow { row: i });
            }
            let range = support.row_range(i);
            let hi = h.row(i);
            let scores = cols.iter().map(|&j| scale * hi.iter().zip(h.row(j)).map(|(a, b)| a * b).sum::<f64>());
            softmax_support(scores, &mut weights[range.clone()]);
            let zi = out.row_mut(i);
            for (&j, &w) in cols.iter().zip(&weights[range]) {
                for (o, &x) in zi.iter_mut().zip(h.row(j)) {
                    *o += w * x;
                }
            }
        }
        let op = Op::SparseAttention { input: self.id, support: Arc::clone(support), weights, scale };
        self.unary(op, out, "sparse_self_attention")
    }

    /// `a · self` for a constant sparse `a`.
    pub fn spmm_left(&self, a: &Arc<CsrMatrix>) -> Result<Tensor<'t>, TensorError> {
        let b = self.value();
        if a.shape().1 != b.rows() {
            return Err(TensorError::shape("spmm", a.shape(), b.shape()));
        }
        let mut out = Matrix::zeros(a.shape().0, b.cols());
        a.mul_dense_into(&b, &mut out);
        self.unary(Op::SpMM(Arc::clone(a), self.id), out, "spmm")
    }

    /// Element-wise product with a constant (dropout masks).
    pub fn mul_const(&self, c: Arc<Matrix>) -> Result<Tensor<'t>, TensorError> {
        let a = self.value();
        if a.shape() != c.shape() {
            return Err(TensorError::shape("mul_const", a.shape(), c.shape()));
        }
        let data = a.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(a.rows(), a.cols(), data)?;
        self.unary(Op::MulConst(self.id, c), out, "mul_const")
    }

    /// Sum of all entries as a 1×1 tensor.
    pub fn sum(&self) -> Result<Tensor<'t>, TensorError> {
        let s = self.value().sum();
        self.unary(Op::Sum(self.id), Matrix::filled(1, 1, s), "sum")
    }

    /// `Σ_{r ∈ rows} −ln max(p[r, targets[r]], 1e-12)` over a probability
    /// matrix, as a 1×1 tensor.
    pub fn nll(&self, targets: Arc<[usize]>, rows: Arc<[usize]>) -> Result<Tensor<'t>, TensorError> {
        let p = self.value();
        if targets.len() != p.rows() {
            return Err(TensorError::shape("nll", p.shape(), (targets.len(), 1)));
        }
        let mut total = 0.0;
        for &r in rows.iter() {
            if r >= p.rows() || targets[r] >= p.cols() {
                return Err(TensorError::shape("nll", p.shape(), (r, targets.get(r).copied().unwrap_or(0))));
            }
            total -= p.get(r, targets[r]).max(LOG_CLAMP).ln();
        }
        self.unary(Op::Nll { input: self.id, targets, rows }, Matrix::filled(1, 1, total), "nll")
    }
}
