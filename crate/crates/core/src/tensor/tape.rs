use super::{matmul_at_into, matmul_bt_into, Tensor};
use crate::error::{DmdError, Result};

/// Denominator clamp for cosine similarity. Zero vectors give a cosine of 0.
pub const COSINE_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Sum(Var),
    Mean(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Abs(Var),
    Square(Var),
    Softmax { x: Var, axis: usize },
    MaskedSoftmaxRows { x: Var, valid: usize },
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    Element { x: Var, index: usize },
    Transpose(Var),
    LayerNormRows { x: Var, eps: f64 },
    SqFrobenius(Var),
    StopGradient(Var),
    MeanPoolRows { x: Var, len: usize },
    MaskRows { x: Var, len: usize },
    Im2ColSame { x: Var, width: usize },
    Cosine(Var, Var),
    PairwiseCosine(Var),
    TripletHinge { gram: Var, triplets: Vec<[usize; 3]>, alpha: f64 },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddBias(a, b) | ScaleBy(a, b)
            | Cosine(a, b) => vec![*a, *b],
            Scale(x, _) | Sum(x) | Mean(x) | Relu(x) | Sigmoid(x) | Tanh(x) | Abs(x)
            | Square(x) | Transpose(x) | SqFrobenius(x) | StopGradient(x) | PairwiseCosine(x) => {
                vec![*x]
            }
            Softmax { x, .. }
            | MaskedSoftmaxRows { x, .. }
            | SliceCols { x, .. }
            | Element { x, .. }
            | LayerNormRows { x, .. }
            | MeanPoolRows { x, .. }
            | MaskRows { x, .. }
            | Im2ColSame { x, .. } => vec![*x],
            TripletHinge { gram, .. } => vec![*gram],
            Concat(vs) | StackRows(vs) => vs.clone(),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Dynamic reverse-mode tape. Rebuilt for every forward pass.
///
/// Nodes are appended after their parents, so index order is a topological
/// order and the backward sweep walks indices in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    // Values substituted for stop-gradient outputs, in call order. Used by
    // finite-difference checks of objectives that contain detached terms.
    frozen_detached: Option<Vec<Tensor>>,
    detached_cursor: usize,
    detached_log: Vec<Tensor>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn shape_err<T>(op: &'static str, detail: String) -> Result<T> {
    Err(DmdError::shape(op, detail))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose stop-gradient calls return `values` in order instead of
    /// their inputs.
    pub fn with_frozen_detached(values: Vec<Tensor>) -> Self {
        Self {
            frozen_detached: Some(values),
            ..Self::default()
        }
    }

    /// Outputs of every stop-gradient call so far, in call order.
    pub fn detached_values(&self) -> &[Tensor] {
        &self.detached_log
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let rg = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.push_raw(value, op, rg)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    // ---------------------------------------------------------------- forward

    /// Matrix product. A rank-1 left operand is treated as a single row and
    /// yields a rank-1 result.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let (ta, tb) = (self.val(a), self.val(b));
            if tb.rank() != 2 || ta.cols() != tb.rows() {
                return shape_err(
                    "matmul",
                    format!("{:?} x {:?}", ta.shape(), tb.shape()),
                );
            }
            ta.matmul(tb)?
        };
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            );
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.val(a), self.val(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Adds a rank-1 bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.val(x), self.val(bias));
        if tb.rank() != 1 || tb.len() != tx.cols() {
            return shape_err(
                "add_bias",
                format!("{:?} + bias {:?}", tx.shape(), tb.shape()),
            );
        }
        let n = tx.cols();
        let mut v = tx.clone();
        for (i, e) in v.data_mut().iter_mut().enumerate() {
            *e += tb.data()[i % n];
        }
        Ok(self.push(v, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.val(x).map(|e| e * c);
        self.push(v, Op::Scale(x, c))
    }

    /// Multiplies every entry of `x` by the single-element tensor `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.val(s).len() != 1 {
            return shape_err("scale_by", format!("scalar expected, got {:?}", self.shape(s)));
        }
        let c = self.item(s);
        let v = self.val(x).map(|e| e * c);
        Ok(self.push(v, Op::ScaleBy(x, s)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.val(x).data().iter().sum());
        self.push(v, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.val(x);
        let v = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        self.push(v, Op::Mean(x))
    }

    /// Sum of single-element tensors (or any same-shape list).
    pub fn add_all(&mut self, vs: &[Var]) -> Result<Var> {
        let (first, rest) = vs
            .split_first()
            .ok_or_else(|| DmdError::shape("add_all", "empty operand list"))?;
        let mut acc = *first;
        for &v in rest {
            acc = self.add(acc, v)?;
        }
        Ok(acc)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.val(x).map(|e| e.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.val(x).map(stable_sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.val(x).map(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.val(x).map(f64::abs);
        self.push(v, Op::Abs(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.val(x).map(|e| e * e);
        self.push(v, Op::Square(x))
    }

    /// Max-subtracted softmax along `axis` (0 or 1 for matrices, 0 for vectors).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.val(x);
        if axis >= t.rank() {
            return shape_err("softmax", format!("axis {axis} for shape {:?}", t.shape()));
        }
        let v = if t.rank() == 1 || axis == 1 {
            softmax_rows(t, t.cols())
        } else {
            softmax_rows(&t.transpose(), t.rows()).transpose()
        };
        Ok(self.push(v, Op::Softmax { x, axis }))
    }

    /// Row-wise softmax restricted to the first `valid` columns; the rest are
    /// exactly zero.
    pub fn masked_softmax_rows(&mut self, x: Var, valid: usize) -> Result<Var> {
        let t = self.val(x);
        if valid == 0 || valid > t.cols() {
            return shape_err(
                "masked_softmax_rows",
                format!("{valid} valid columns for shape {:?}", t.shape()),
            );
        }
        let v = softmax_rows(t, valid);
        Ok(self.push(v, Op::MaskedSoftmaxRows { x, valid }))
    }

    /// Concatenation along the last axis. Operands must share rank and, for
    /// matrices, row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat", "empty operand list".into());
        };
        let rank = self.val(first).rank();
        let rows = self.val(first).rows();
        for &p in parts {
            let t = self.val(p);
            if t.rank() != rank || t.rows() != rows {
                return shape_err(
                    "concat",
                    format!("{:?} vs {:?}", self.shape(first), t.shape()),
                );
            }
        }
        let total: usize = parts.iter().map(|&p| self.val(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.val(p).row(r));
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    /// Stacks equal-length vectors into an `n × d` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return shape_err("stack_rows", "empty operand list".into());
        };
        let d = self.val(first).len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let t = self.val(r);
            if t.rank() != 1 || t.len() != d {
                return shape_err("stack_rows", format!("row of shape {:?}, expected [{d}]", t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let v = Tensor::matrix(rows.len(), d, data)?;
        Ok(self.push(v, Op::StackRows(rows.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.val(x);
        if len == 0 || start + len > t.cols() {
            return shape_err(
                "slice_cols",
                format!("columns {start}..{} of shape {:?}", start + len, t.shape()),
            );
        }
        let rows = t.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let shape = if t.rank() == 1 { vec![len] } else { vec![rows, len] };
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::SliceCols { x, start }))
    }

    /// Single entry (flat index) as a scalar.
    pub fn element(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.val(x);
        if index >= t.len() {
            return shape_err("element", format!("index {index} of shape {:?}", t.shape()));
        }
        let v = Tensor::scalar(t.data()[index]);
        Ok(self.push(v, Op::Element { x, index }))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let v = self.val(x).transpose();
        self.push(v, Op::Transpose(x))
    }

    /// Per-row normalization to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&mut self, x: Var, eps: f64) -> Var {
        let t = self.val(x);
        let (rows, n) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(t.len());
        for r in 0..rows {
            let row = t.row(r);
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|e| (e - mu) * (e - mu)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            data.extend(row.iter().map(|e| (e - mu) * inv));
        }
        let v = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(v, Op::LayerNormRows { x, eps })
    }

    /// `Σ x²` as a scalar.
    pub fn sq_frobenius(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.val(x).data().iter().map(|e| e * e).sum());
        self.push(v, Op::SqFrobenius(x))
    }

    /// Identity forward, zero backward.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let v = match &self.frozen_detached {
            Some(frozen) => frozen
                .get(self.detached_cursor)
                .cloned()
                .unwrap_or_else(|| self.val(x).clone()),
            None => self.val(x).clone(),
        };
        self.detached_cursor += 1;
        self.detached_log.push(v.clone());
        self.push_raw(v, Op::StopGradient(x), false)
    }

    /// Mean over the first `len` rows of a `T × d` matrix.
    pub fn mean_pool_rows(&mut self, x: Var, len: usize) -> Result<Var> {
        let t = self.val(x);
        if t.rank() != 2 || len == 0 || len > t.rows() {
            return shape_err("mean_pool_rows", format!("length {len} for shape {:?}", t.shape()));
        }
        let d = t.cols();
        let mut out = vec![0.0; d];
        for r in 0..len {
            for (o, e) in out.iter_mut().zip(t.row(r)) {
                *o += e;
            }
        }
        for o in &mut out {
            *o /= len as f64;
        }
        let v = Tensor::vector(out);
        Ok(self.push(v, Op::MeanPoolRows { x, len }))
    }

    /// Zeroes every row at or beyond `len`.
    pub fn mask_rows(&mut self, x: Var, len: usize) -> Result<Var> {
        let t = self.val(x);
        if t.rank() != 2 || len > t.rows() {
            return shape_err("mask_rows", format!("length {len} for shape {:?}", t.shape()));
        }
        let mut v = t.clone();
        let d = v.cols();
        for e in &mut v.data_mut()[len * d..] {
            *e = 0.0;
        }
        Ok(self.push(v, Op::MaskRows { x, len }))
    }

    /// Builds the `T × (width·d)` patch matrix for a stride-1, zero-padded
    /// ("same") temporal convolution. Patch column block `o` holds the row at
    /// time offset `o − (width−1)/2`.
    pub fn im2col_same(&mut self, x: Var, width: usize) -> Result<Var> {
        if width.is_multiple_of(2) {
            return Err(DmdError::Config(format!(
                "temporal kernel width must be odd to preserve length, got {width}"
            )));
        }
        let t = self.val(x);
        if t.rank() != 2 {
            return shape_err("im2col_same", format!("expected T × d, got {:?}", t.shape()));
        }
        let (steps, d) = (t.rows(), t.cols());
        let half = (width - 1) / 2;
        let mut data = vec![0.0; steps * width * d];
        for s in 0..steps {
            for o in 0..width {
                let src = s as isize + o as isize - half as isize;
                if src < 0 || src >= steps as isize {
                    continue;
                }
                let dst = s * width * d + o * d;
                data[dst..dst + d].copy_from_slice(t.row(src as usize));
            }
        }
        let v = Tensor::matrix(steps, width * d, data)?;
        Ok(self.push(v, Op::Im2ColSame { x, width }))
    }

    /// Cosine similarity of two vectors, denominator clamped at [`COSINE_EPS`].
    pub fn cosine(&mut self, u: Var, v: Var) -> Result<Var> {
        let (tu, tv) = (self.val(u), self.val(v));
        if tu.rank() != 1 || tu.shape() != tv.shape() {
            return shape_err("cosine", format!("{:?} vs {:?}", tu.shape(), tv.shape()));
        }
        let c = super::cosine_plain(tu.data(), tv.data());
        Ok(self.push(Tensor::scalar(c), Op::Cosine(u, v)))
    }

    /// All pairwise row cosines of an `n × d` matrix.
    pub fn pairwise_cosine(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x);
        if t.rank() != 2 {
            return shape_err("pairwise_cosine", format!("expected n × d, got {:?}", t.shape()));
        }
        let n = t.rows();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = super::cosine_plain(t.row(i), t.row(j));
            }
        }
        let v = Tensor::matrix(n, n, data)?;
        Ok(self.push(v, Op::PairwiseCosine(x)))
    }

    /// `(1/|S|) Σ max(0, α − G[i][j] + G[i][k])` over triplets `[i, j, k]`
    /// of a similarity matrix `G`. An empty triplet list yields 0.
    pub fn triplet_hinge(&mut self, gram: Var, triplets: Vec<[usize; 3]>, alpha: f64) -> Result<Var> {
        let t = self.val(gram);
        let n = t.rows();
        if t.rank() != 2 || t.cols() != n {
            return shape_err("triplet_hinge", format!("square matrix expected, got {:?}", t.shape()));
        }
        if let Some(bad) = triplets.iter().find(|tr| tr.iter().any(|&i| i >= n)) {
            return shape_err("triplet_hinge", format!("triplet {bad:?} out of range for n = {n}"));
        }
        let total: f64 = triplets
            .iter()
            .map(|&[i, j, k]| (alpha - t.at(i, j) + t.at(i, k)).max(0.0))
            .sum();
        let value = if triplets.is_empty() {
            0.0
        } else {
            total / triplets.len() as f64
        };
        Ok(self.push(
            Tensor::scalar(value),
            Op::TripletHinge {
                gram,
                triplets,
                alpha,
            },
        ))
    }

    // --------------------------------------------------------- composites

    /// `x · w + b` for `x` of shape `[n]` or `[T, n]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    /// Stride-1 temporal convolution with zero "same" padding. `w` has shape
    /// `(width·d_in) × d_out`.
    pub fn conv1d_temporal(&mut self, x: Var, w: Var, b: Var, width: usize) -> Result<Var> {
        let patches = self.im2col_same(x, width)?;
        self.linear(patches, w, b)
    }

    // --------------------------------------------------------------- backward

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.val(loss).len() != 1 {
            return shape_err("backward", format!("scalar loss expected, got {:?}", self.shape(loss)));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        let y = &node.value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = &self.nodes[v.0];
            if !n.requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(n.value.shape()));
            f(slot.data_mut());
        };
        match &node.op {
            Op::Leaf | Op::StopGradient(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                acc(*a, &mut |ga| matmul_bt_into(gd, tb.data(), ga, m, k, n));
                acc(*b, &mut |gb| matmul_at_into(ta.data(), gd, gb, m, k, n));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| axpy(ga, gd, 1.0));
                acc(*b, &mut |gb| axpy(gb, gd, 1.0));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| axpy(ga, gd, 1.0));
                acc(*b, &mut |gb| axpy(gb, gd, -1.0));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.val(*a).data(), self.val(*b).data());
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += gd[i] * tb[i];
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] += gd[i] * ta[i];
                    }
                });
            }
            Op::AddBias(x, b) => {
                acc(*x, &mut |gx| axpy(gx, gd, 1.0));
                acc(*b, &mut |gb| {
                    let n = gb.len();
                    for (i, e) in gd.iter().enumerate() {
                        gb[i % n] += e;
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &mut |gx| axpy(gx, gd, *c)),
            Op::ScaleBy(x, s) => {
                let c = self.item(*s);
                let tx = self.val(*x).data();
                acc(*x, &mut |gx| axpy(gx, gd, c));
                acc(*s, &mut |gs| gs[0] += dot(gd, tx));
            }
            Op::Sum(x) => acc(*x, &mut |gx| gx.iter_mut().for_each(|e| *e += gd[0])),
            Op::Mean(x) => acc(*x, &mut |gx| {
                let s = gd[0] / gx.len() as f64;
                gx.iter_mut().for_each(|e| *e += s);
            }),
            Op::Relu(x) => {
                let tx = self.val(*x).data();
                acc(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        if tx[i] > 0.0 {
                            gx[i] += gd[i];
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let yd = y.data();
                acc(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        gx[i] += gd[i] * yd[i] * (1.0 - yd[i]);
                    }
                });
            }
            Op::Tanh(x) => {
                let yd = y.data();
                acc(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        gx[i] += gd[i] * (1.0 - yd[i] * yd[i]);
                    }
                });
            }
            Op::Abs(x) => {
                let tx = self.val(*x).data();
                acc(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        gx[i] += gd[i] * sign(tx[i]);
                    }
                });
            }
            Op::Square(x) => {
                let tx = self.val(*x).data();
                acc(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        gx[i] += 2.0 * tx[i] * gd[i];
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let gx_val = if y.rank() == 1 || *axis == 1 {
                    softmax_rows_backward(y, g, y.cols())
                } else {
                    softmax_rows_backward(&y.transpose(), &g.transpose(), y.rows()).transpose()
                };
                acc(*x, &mut |gx| axpy(gx, gx_val.data(), 1.0));
            }
            Op::MaskedSoftmaxRows { x, valid } => {
                let gx_val = softmax_rows_backward(y, g, *valid);
                acc(*x, &mut |gx| axpy(gx, gx_val.data(), 1.0));
            }
            Op::Concat(parts) => {
                let rows = y.rows();
                let total = y.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.val(p).cols();
                    acc(p, &mut |gp| {
                        for r in 0..rows {
                            for c in 0..w {
                                gp[r * w + c] += gd[r * total + offset + c];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::StackRows(rows) => {
                let d = y.cols();
                for (r, &v) in rows.iter().enumerate() {
                    acc(v, &mut |gv| axpy(gv, &gd[r * d..(r + 1) * d], 1.0));
                }
            }
            Op::SliceCols { x, start } => {
                let (rows, w) = (y.rows(), y.cols());
                let total = self.val(*x).cols();
                acc(*x, &mut |gx| {
                    for r in 0..rows {
                        for c in 0..w {
                            gx[r * total + start + c] += gd[r * w + c];
                        }
                    }
                });
            }
            Op::Element { x, index } => acc(*x, &mut |gx| gx[*index] += gd[0]),
            Op::Transpose(x) => {
                let gt = g.transpose();
                acc(*x, &mut |gx| axpy(gx, gt.data(), 1.0));
            }
            Op::LayerNormRows { x, eps } => {
                let tx = self.val(*x);
                let (rows, n) = (tx.rows(), tx.cols());
                let yd = y.data();
                acc(*x, &mut |gx| {
                    for r in 0..rows {
                        let row = tx.row(r);
                        let mu = row.iter().sum::<f64>() / n as f64;
                        let var = row.iter().map(|e| (e - mu) * (e - mu)).sum::<f64>() / n as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        let gr = &gd[r * n..(r + 1) * n];
                        let yr = &yd[r * n..(r + 1) * n];
                        let g_mean = gr.iter().sum::<f64>() / n as f64;
                        let gy_mean = dot(gr, yr) / n as f64;
                        for c in 0..n {
                            gx[r * n + c] += inv * (gr[c] - g_mean - yr[c] * gy_mean);
                        }
                    }
                });
            }
            Op::SqFrobenius(x) => {
                let tx = self.val(*x).data();
                acc(*x, &mut |gx| axpy(gx, tx, 2.0 * gd[0]));
            }
            Op::MeanPoolRows { x, len } => {
                let d = y.len();
                let s = 1.0 / *len as f64;
                acc(*x, &mut |gx| {
                    for r in 0..*len {
                        axpy(&mut gx[r * d..(r + 1) * d], gd, s);
                    }
                });
            }
            Op::MaskRows { x, len } => {
                let d = y.cols();
                acc(*x, &mut |gx| axpy(&mut gx[..len * d], &gd[..len * d], 1.0));
            }
            Op::Im2ColSame { x, width } => {
                let tx = self.val(*x);
                let (steps, d) = (tx.rows(), tx.cols());
                let half = (width - 1) / 2;
                acc(*x, &mut |gx| {
                    for s in 0..steps {
                        for o in 0..*width {
                            let src = s as isize + o as isize - half as isize;
                            if src < 0 || src >= steps as isize {
                                continue;
                            }
                            let from = s * width * d + o * d;
                            let src = src as usize;
                            axpy(&mut gx[src * d..(src + 1) * d], &gd[from..from + d], 1.0);
                        }
                    }
                });
            }
            Op::Cosine(u, v) => {
                let (tu, tv) = (self.val(*u).data(), self.val(*v).data());
                let (gu, gv) = cosine_grads(tu, tv, y.item());
                acc(*u, &mut |g_u| axpy(g_u, &gu, gd[0]));
                acc(*v, &mut |g_v| axpy(g_v, &gv, gd[0]));
            }
            Op::PairwiseCosine(x) => {
                let tx = self.val(*x);
                let (n, d) = (tx.rows(), tx.cols());
                let yd = y.data();
                acc(*x, &mut |gx| {
                    for i in 0..n {
                        for j in 0..n {
                            let gij = gd[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let (gu, gv) = cosine_grads(tx.row(i), tx.row(j), yd[i * n + j]);
                            axpy(&mut gx[i * d..(i + 1) * d], &gu, gij);
                            axpy(&mut gx[j * d..(j + 1) * d], &gv, gij);
                        }
                    }
                });
            }
            Op::TripletHinge {
                gram,
                triplets,
                alpha,
            } => {
                if triplets.is_empty() {
                    return;
                }
                let tg = self.val(*gram);
                let n = tg.rows();
                let s = gd[0] / triplets.len() as f64;
                acc(*gram, &mut |gg| {
                    for &[i, j, k] in triplets {
                        if alpha - tg.at(i, j) + tg.at(i, k) > 0.0 {
                            gg[i * n + j] -= s;
                            gg[i * n + k] += s;
                        }
                    }
                });
            }
        }
    }
}

fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax over the first `valid` columns of each row.
fn softmax_rows(t: &Tensor, valid: usize) -> Tensor {
    let (rows, n) = (t.rows(), t.cols());
    let mut out = vec![0.0; rows * n];
    for r in 0..rows {
        let row = &t.row(r)[..valid];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (c, &e) in row.iter().enumerate() {
            let v = (e - max).exp();
            out[r * n + c] = v;
            z += v;
        }
        for o in &mut out[r * n..r * n + valid] {
            *o /= z;
        }
    }
    Tensor::new(t.shape().to_vec(), out).expect("same shape")
}

fn softmax_rows_backward(y: &Tensor, g: &Tensor, valid: usize) -> Tensor {
    let (rows, n) = (y.rows(), y.cols());
    let mut out = vec![0.0; rows * n];
    for r in 0..rows {
        let yr = &y.row(r)[..valid];
        let gr = &g.row(r)[..valid];
        let s = dot(yr, gr);
        for c in 0..valid {
            out[r * n + c] = yr[c] * (gr[c] - s);
        }
    }
    Tensor::new(y.shape().to_vec(), out).expect("same shape")
}

/// Partial derivatives of `cos(u, v)` with respect to `u` and `v`.
fn cosine_grads(u: &[f64], v: &[f64], c: f64) -> (Vec<f64>, Vec<f64>) {
    let nu2: f64 = u.iter().map(|e| e * e).sum();
    let nv2: f64 = v.iter().map(|e| e * e).sum();
    let den = (nu2 * nv2).sqrt();
    if den > COSINE_EPS {
        let gu = u.iter().zip(v).map(|(a, b)| b / den - c * a / nu2).collect();
        let gv = u.iter().zip(v).map(|(a, b)| a / den - c * b / nv2).collect();
        (gu, gv)
    } else {
        (
            v.iter().map(|b| b / COSINE_EPS).collect(),
            u.iter().map(|a| a / COSINE_EPS).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central finite differences of `f` at every entry of every input.
    fn numeric_grads(inputs: &[Tensor], f: &dyn Fn(&[Tensor]) -> f64) -> Vec<Tensor> {
        let h = 1e-5;
        inputs
            .iter()
            .enumerate()
            .map(|(which, t)| {
                let mut g = Tensor::zeros(t.shape());
                for i in 0..t.len() {
                    let mut plus = inputs.to_vec();
                    plus[which].data_mut()[i] += h;
                    let mut minus = inputs.to_vec();
                    minus[which].data_mut()[i] -= h;
                    g.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
                }
                g
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
    }

    /// Builds `graph` on fresh tapes, compares backprop against finite
    /// differences, and returns the worst relative error.
    fn check(inputs: Vec<Tensor>, graph: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
        let eval = |ts: &[Tensor]| {
            let mut tape = Tape::new();
            let vs: Vec<Var> = ts.iter().map(|t| tape.param(t.clone())).collect();
            let out = graph(&mut tape, &vs);
            tape.item(out)
        };
        let mut tape = Tape::new();
        let vs: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = graph(&mut tape, &vs);
        let grads = tape.backward(out).unwrap();
        let numeric = numeric_grads(&inputs, &eval);
        let mut worst: f64 = 0.0;
        for (v, n) in vs.iter().zip(&numeric) {
            let zeros = Tensor::zeros(n.shape());
            let a = grads.get(*v).unwrap_or(&zeros);
            for (x, y) in a.data().iter().zip(n.data()) {
                worst = worst.max(rel_err(*x, *y));
            }
        }
        worst
    }

    /// Random weighting turns any output into a scalar with a generic gradient.
    fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Var {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = tape.shape(y).to_vec();
        let w = tape.constant(random(&mut rng, &shape));
        let p = tape.mul(y, w).unwrap();
        tape.sum(p)
    }

    const TOL: f64 = 1e-5;

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::identity(2));
        let a = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let y = tape.matmul(i2, a).unwrap();
        assert_eq!(tape.value(y), tape.value(a));

        let r = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let c = tape.constant(Tensor::from_rows(&[vec![0.0], vec![5.0]]).unwrap());
        let y = tape.matmul(r, c).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[3, 4]));
        let b = tape.constant(Tensor::zeros(&[3, 2]));
        let msg = tape.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[3, 4]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = vec![random(&mut rng, &[3, 4]), random(&mut rng, &[4, 2])];
        let err = check(inputs, |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            weighted_sum(t, y, 9)
        });
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = tape.softmax(x, 0).unwrap();
        for &p in tape.value(y).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = tape.constant(Tensor::vector(vec![1000.0, 1000.0]));
        let y = tape.softmax(x, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
        assert!(tape.softmax(x, 1).is_err());
    }

    #[test]
    fn softmax_gradient_both_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = check(vec![random(&mut rng, &[5])], |t, v| {
            let y = t.softmax(v[0], 0).unwrap();
            weighted_sum(t, y, 3)
        });
        assert!(err < 1e-6, "{err}");
        for axis in 0..2 {
            let err = check(vec![random(&mut rng, &[3, 4])], |t, v| {
                let y = t.softmax(v[0], axis).unwrap();
                weighted_sum(t, y, 4)
            });
            assert!(err < 1e-6, "axis {axis}: {err}");
        }
    }

    #[test]
    fn masked_softmax_zeroes_tail_and_checks_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[3, 5]);
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let y = tape.masked_softmax_rows(v, 2).unwrap();
        for r in 0..3 {
            let row = tape.value(y).row(r);
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
            assert_eq!(&row[2..], &[0.0, 0.0, 0.0]);
        }
        assert!(tape.masked_softmax_rows(v, 0).is_err());
        let err = check(vec![x], |t, v| {
            let y = t.masked_softmax_rows(v[0], 3).unwrap();
            weighted_sum(t, y, 6)
        });
        assert!(err < TOL, "{err}");
    }

    #[test]
    fn conv1d_preserves_length_and_rejects_even_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tape = Tape::new();
        let x = tape.constant(random(&mut rng, &[5, 3]));
        let w = tape.constant(random(&mut rng, &[9, 4]));
        let b = tape.constant(Tensor::zeros(&[4]));
        let y = tape.conv1d_temporal(x, w, b, 3).unwrap();
        assert_eq!(tape.shape(y), &[5, 4]);
        let w2 = tape.constant(random(&mut rng, &[6, 4]));
        assert!(matches!(
            tape.conv1d_temporal(x, w2, b, 2),
            Err(DmdError::Config(_))
        ));
    }

    #[test]
    fn conv1d_width_one_identity_is_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xt = random(&mut rng, &[4, 3]);
        let mut tape = Tape::new();
        let x = tape.constant(xt.clone());
        let w = tape.constant(Tensor::identity(3));
        let b = tape.constant(Tensor::zeros(&[3]));
        let y = tape.conv1d_temporal(x, w, b, 1).unwrap();
        assert_eq!(tape.value(y), &xt);
    }

    #[test]
    fn conv1d_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inputs = vec![
            random(&mut rng, &[5, 3]),
            random(&mut rng, &[9, 2]),
            random(&mut rng, &[2]),
        ];
        let err = check(inputs, |t, v| {
            let y = t.conv1d_temporal(v[0], v[1], v[2], 3).unwrap();
            weighted_sum(t, y, 10)
        });
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn cosine_examples() {
        let mut tape = Tape::new();
        let u = tape.constant(Tensor::vector(vec![1.0, 2.0, -3.0]));
        let neg = tape.constant(Tensor::vector(vec![-1.0, -2.0, 3.0]));
        let e0 = tape.constant(Tensor::vector(vec![1.0, 0.0]));
        let e1 = tape.constant(Tensor::vector(vec![0.0, 1.0]));
        let zero = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let c = tape.cosine(u, u).unwrap();
        assert!((tape.item(c) - 1.0).abs() < 1e-15);
        let c = tape.cosine(u, neg).unwrap();
        assert!((tape.item(c) + 1.0).abs() < 1e-15);
        let c = tape.cosine(e0, e1).unwrap();
        assert_eq!(tape.item(c), 0.0);
        let c = tape.cosine(zero, e1).unwrap();
        assert_eq!(tape.item(c), 0.0);
    }

    #[test]
    fn elementwise_and_reduction_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        type Build = fn(&mut Tape, &[Var]) -> Var;
        let cases: Vec<(&str, usize, Build)> = vec![
            ("add", 2, |t, v| t.add(v[0], v[1]).unwrap()),
            ("sub", 2, |t, v| t.sub(v[0], v[1]).unwrap()),
            ("mul", 2, |t, v| t.mul(v[0], v[1]).unwrap()),
            ("relu", 1, |t, v| t.relu(v[0])),
            ("sigmoid", 1, |t, v| t.sigmoid(v[0])),
            ("tanh", 1, |t, v| t.tanh(v[0])),
            ("abs", 1, |t, v| t.abs(v[0])),
            ("square", 1, |t, v| t.square(v[0])),
            ("scale", 1, |t, v| t.scale(v[0], -2.5)),
            ("transpose", 1, |t, v| t.transpose(v[0])),
            ("layer_norm", 1, |t, v| t.layer_norm_rows(v[0], 1e-5)),
            ("mask_rows", 1, |t, v| t.mask_rows(v[0], 2).unwrap()),
            ("concat", 2, |t, v| t.concat(&[v[0], v[1]]).unwrap()),
            ("slice_cols", 1, |t, v| t.slice_cols(v[0], 1, 2).unwrap()),
        ];
        for (name, arity, build) in cases {
            for seed in 0..20u64 {
                let inputs: Vec<Tensor> = (0..arity).map(|_| random(&mut rng, &[3, 4])).collect();
                let err = check(inputs, |t, v| {
                    let y = build(t, v);
                    weighted_sum(t, y, 100 + seed)
                });
                assert!(err < TOL, "{name} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn scalar_reductions_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for seed in 0..20 {
            let x = random(&mut rng, &[4, 3]);
            let s = random(&mut rng, &[1]);
            let u = random(&mut rng, &[6]);
            let v = random(&mut rng, &[6]);
            assert!(check(vec![x.clone()], |t, v| t.sum(v[0])) < TOL);
            assert!(check(vec![x.clone()], |t, v| t.mean(v[0])) < TOL);
            assert!(check(vec![x.clone()], |t, v| t.sq_frobenius(v[0])) < TOL);
            let e = check(vec![x.clone()], |t, v| {
                let p = t.mean_pool_rows(v[0], 3).unwrap();
                weighted_sum(t, p, seed)
            });
            assert!(e < TOL, "pool {e}");
            let e = check(vec![x.clone(), s.clone()], |t, v| {
                let y = t.scale_by(v[0], v[1]).unwrap();
                weighted_sum(t, y, seed)
            });
            assert!(e < TOL, "scale_by {e}");
            let e = check(vec![u.clone(), v.clone()], |t, v| t.cosine(v[0], v[1]).unwrap());
            assert!(e < TOL, "cosine {e}");
            let e = check(vec![x.clone()], |t, v| {
                let c = t.pairwise_cosine(v[0]).unwrap();
                weighted_sum(t, c, seed)
            });
            assert!(e < TOL, "pairwise cosine {e}");
            let a = random(&mut rng, &[3]);
            let b = random(&mut rng, &[3]);
            let e = check(vec![a, b, x.transpose()], |t, v| {
                let rows = t.stack_rows(&[v[0], v[1]]).unwrap();
                let p = t.matmul(rows, v[2]).unwrap();
                let q = t.element(p, 5).unwrap();
                let r = t.matmul(v[0], v[2]).unwrap();
                let bias = t.slice_cols(r, 0, 4).unwrap();
                let pb = t.add_bias(p, bias).unwrap();
                let s = weighted_sum(t, pb, 77);
                t.add(s, q).unwrap()
            });
            assert!(e < TOL, "stack/element {e}");
        }
    }

    #[test]
    fn stop_gradient_is_identity_forward_zero_backward() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.1, -2.0, 3.5]));
        let y = tape.stop_gradient(x);
        assert_eq!(tape.value(y), tape.value(x));
        let s = tape.sq_frobenius(y);
        let g = tape.backward(s).unwrap();
        assert!(g.get(x).is_none());

        // Only the undetached branch contributes.
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let d = tape.stop_gradient(x);
        let p = tape.mul(x, d).unwrap();
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        // y = (x·x) + 3x, shared leaf x used three times.
        let xv = 1.7;
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(xv));
        let sq = tape.mul(x, x).unwrap();
        let lin = tape.scale(x, 3.0);
        let y = tape.add(sq, lin).unwrap();
        let g = tape.backward(y).unwrap();
        let analytic = g.get(x).unwrap().item();
        let h = 1e-6;
        let f = |v: f64| v * v + 3.0 * v;
        let numeric = (f(xv + h) - f(xv - h)) / (2.0 * h);
        assert!((analytic - numeric).abs() < 1e-8);
        assert!((analytic - (2.0 * xv + 3.0)).abs() < 1e-15);
    }

    #[test]
    fn triplet_hinge_values_and_gradient() {
        let mut tape = Tape::new();
        let g = tape.constant(Tensor::from_rows(&[
            vec![1.0, 0.5, 0.5],
            vec![0.5, 1.0, 0.0],
            vec![0.5, 0.0, 1.0],
        ]).unwrap());
        let l = tape.triplet_hinge(g, vec![[0, 1, 2]], 0.2).unwrap();
        assert!((tape.item(l) - 0.2).abs() < 1e-15);
        let l = tape.triplet_hinge(g, vec![], 0.2).unwrap();
        assert_eq!(tape.item(l), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random(&mut rng, &[4, 3]);
        let err = check(vec![x], |t, v| {
            let c = t.pairwise_cosine(v[0]).unwrap();
            t.triplet_hinge(c, vec![[0, 1, 2], [1, 3, 0], [2, 0, 3]], 0.8).unwrap()
        });
        assert!(err < TOL, "{err}");
    }

    #[test]
    fn frozen_detached_values_replace_stop_gradient_outputs() {
        let mut tape = Tape::with_frozen_detached(vec![Tensor::scalar(10.0)]);
        let x = tape.param(Tensor::scalar(2.0));
        let d = tape.stop_gradient(x);
        assert_eq!(tape.item(d), 10.0);
        assert_eq!(tape.detached_values().len(), 1);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2, 2]));
        assert!(tape.backward(x).is_err());
    }
}
