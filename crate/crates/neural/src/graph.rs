//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters are borrowed
//! from their [`ParamStore`]s, so a frozen base model shared by many adapter
//! sets is never copied. Nodes whose inputs cannot reach a trainable parameter
//! are skipped entirely during the backward sweep.

use std::borrow::Cow;
use std::collections::HashMap;

use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{argmax, log_sum_exp, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Target value that excludes a row from [`Graph::cross_entropy`].
pub const IGNORE_TARGET: usize = usize::MAX;

/// Backward rule of a custom node: maps the output gradient to one optional
/// gradient per input, in input order.
pub type BackwardFn<'a> = Box<dyn Fn(&Tensor) -> Vec<Option<Tensor>> + 'a>;

enum Op<'a> {
    Leaf,
    Param { store: u64, id: usize },
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    ScaleShift(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Transpose(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normed: Tensor,
        inv_std: Vec<f64>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    SumAll(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor,
    },
    Custom {
        inputs: Vec<Var>,
        backward: BackwardFn<'a>,
    },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op<'a>,
    requires_grad: bool,
}

pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    params: HashMap<(u64, usize), Var>,
}

impl<'a> Default for Graph<'a> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op<'a>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "scalar() on a {:?} tensor", t.shape());
        t.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Whether every node value is finite.
    pub fn all_finite(&self) -> bool {
        self.nodes.iter().all(|n| n.value.is_finite())
    }

    /// A constant input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    /// A borrowed constant input.
    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, false)
    }

    /// Parameter leaf. Repeated requests for the same parameter return the same
    /// node, so gradients of shared weights accumulate in one place.
    pub fn param(&mut self, store: &'a ParamStore, id: ParamId) -> Var {
        let key = (store.uid(), id.index());
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let p = store.get(id);
        let v = self.push(
            Cow::Borrowed(&p.value),
            Op::Param {
                store: key.0,
                id: key.1,
            },
            !p.frozen,
        );
        self.params.insert(key, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(Cow::Owned(value), Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_nt(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(Cow::Owned(value), Op::MatMulNT(a, b), rg)
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, what: &str) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "{} shape mismatch", what);
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x + y, "add");
        let rg = self.rg(a) || self.rg(b);
        self.push(Cow::Owned(value), Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x - y, "sub");
        let rg = self.rg(a) || self.rg(b);
        self.push(Cow::Owned(value), Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x * y, "mul");
        let rg = self.rg(a) || self.rg(b);
        self.push(Cow::Owned(value), Op::Mul(a, b), rg)
    }

    /// `a + row` with the `1 x c` row broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        assert_eq!(tr.rows(), 1, "add_row expects a row vector");
        assert_eq!(ta.cols(), tr.cols(), "add_row width mismatch");
        let mut value = ta.clone();
        for r in 0..value.rows() {
            for (v, b) in value.row_mut(r).iter_mut().zip(tr.data()) {
                *v += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(Cow::Owned(value), Op::AddRow(a, row), rg)
    }

    /// `a + col` with the `r x 1` column broadcast over every column of `a`.
    pub fn add_col(&mut self, a: Var, col: Var) -> Var {
        let (ta, tc) = (self.value(a), self.value(col));
        assert_eq!(tc.cols(), 1, "add_col expects a column vector");
        assert_eq!(ta.rows(), tc.rows(), "add_col height mismatch");
        let mut value = ta.clone();
        for r in 0..value.rows() {
            let c = tc.data()[r];
            for v in value.row_mut(r) {
                *v += c;
            }
        }
        let rg = self.rg(a) || self.rg(col);
        self.push(Cow::Owned(value), Op::AddCol(a, col), rg)
    }

    /// `a * scale + shift`, elementwise.
    pub fn scale_shift(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|v| v * scale + shift);
        let rg = self.rg(a);
        self.push(Cow::Owned(value), Op::ScaleShift(a, scale), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.scale_shift(a, s, 0.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(a);
        self.push(Cow::Owned(value), Op::Relu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(Cow::Owned(value), Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        let rg = self.rg(a);
        self.push(Cow::Owned(value), Op::Sigmoid(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(Cow::Owned(value), Op::Transpose(a), rg)
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let mut value = ta.clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.rg(a);
        self.push(Cow::Owned(value), Op::SoftmaxRows(a), rg)
    }

    /// Row-wise layer normalization followed by the affine `gamma`, `beta`
    /// (both `1 x c`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let tx = self.value(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        let mut normed = Tensor::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = tx.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (o, v) in normed.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let (tg, tb) = (self.value(gamma), self.value(beta));
        assert_eq!(tg.shape(), [1, cols], "layer_norm gamma shape");
        assert_eq!(tb.shape(), [1, cols], "layer_norm beta shape");
        let mut value = normed.clone();
        for r in 0..rows {
            for ((v, g), b) in value.row_mut(r).iter_mut().zip(tg.data()).zip(tb.data()) {
                *v = *v * g + b;
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            Cow::Owned(value),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normed,
                inv_std,
            },
            rg,
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows width mismatch");
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            Cow::Owned(Tensor::from_vec(rows, cols, data)),
            Op::ConcatRows(parts.to_vec()),
            rg,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows(), rows, "concat_cols height mismatch");
            for r in 0..rows {
                value.row_mut(r)[offset..offset + t.cols()].copy_from_slice(t.row(r));
            }
            offset += t.cols();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Cow::Owned(value), Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.rows(), "slice_rows out of range");
        let cols = t.cols();
        let data = t.data()[start * cols..(start + len) * cols].to_vec();
        let rg = self.rg(a);
        self.push(
            Cow::Owned(Tensor::from_vec(len, cols, data)),
            Op::SliceRows(a, start),
            rg,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.cols(), "slice_cols out of range");
        let mut value = Tensor::zeros(t.rows(), len);
        for r in 0..t.rows() {
            value.row_mut(r).copy_from_slice(&t.row(r)[start..start + len]);
        }
        let rg = self.rg(a);
        self.push(Cow::Owned(value), Op::SliceCols(a, start), rg)
    }

    /// Stacks `a[idx[0]], a[idx[1]], ...` into a new matrix.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        let cols = t.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            assert!(i < t.rows(), "gather_rows index {} of {}", i, t.rows());
            data.extend_from_slice(t.row(i));
        }
        let rg = self.rg(a);
        self.push(
            Cow::Owned(Tensor::from_vec(idx.len(), cols, data)),
            Op::GatherRows(a, idx.to_vec()),
            rg,
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(
            Cow::Owned(Tensor::from_vec(1, 1, vec![s])),
            Op::SumAll(a),
            rg,
        )
    }

    /// Adds scalars (`1 x 1` nodes) together.
    pub fn add_scalars(&mut self, parts: &[Var]) -> Var {
        let mut iter = parts.iter();
        let first = *iter.next().expect("add_scalars of nothing");
        iter.fold(first, |acc, &p| self.add(acc, p))
    }

    /// Summed softmax cross-entropy over the rows of `logits`.
    ///
    /// `allowed`, when given, masks out entries (row-major, `false` =
    /// excluded) so they take no probability mass. Rows whose target is
    /// [`IGNORE_TARGET`] contribute nothing.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        allowed: Option<&[bool]>,
    ) -> Var {
        let t = self.value(logits);
        assert_eq!(t.rows(), targets.len(), "cross_entropy target count");
        if let Some(mask) = allowed {
            assert_eq!(mask.len(), t.len(), "cross_entropy mask size");
        }
        let cols = t.cols();
        let mut probs = Tensor::zeros(t.rows(), cols);
        let mut loss = 0.0;
        for (r, &target) in targets.iter().enumerate() {
            if target == IGNORE_TARGET {
                continue;
            }
            let row = t.row(r);
            let masked: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(c, &v)| match allowed {
                    Some(m) if !m[r * cols + c] => f64::NEG_INFINITY,
                    _ => v,
                })
                .collect();
            assert!(
                masked[target] > f64::NEG_INFINITY,
                "cross_entropy target {} is masked out",
                target
            );
            let lse = log_sum_exp(&masked);
            loss += lse - masked[target];
            for (p, m) in probs.row_mut(r).iter_mut().zip(&masked) {
                *p = (m - lse).exp();
            }
        }
        let rg = self.rg(logits);
        self.push(
            Cow::Owned(Tensor::from_vec(1, 1, vec![loss])),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        )
    }

    /// Registers a node whose value was computed outside the graph, together
    /// with its backward rule.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, backward: BackwardFn<'a>) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(
            Cow::Owned(value),
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
            rg,
        )
    }

    /// Row-wise argmax of a node's value (ties go to the lowest column).
    pub fn argmax_rows(&self, v: Var) -> Vec<usize> {
        let t = self.value(v);
        (0..t.rows()).map(|r| argmax(t.row(r))).collect()
    }

    /// Backpropagates from the scalar `loss` and collects parameter gradients.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut out = Gradients::new();
        if !self.rg(loss) {
            return out;
        }
        assert_eq!(self.value(loss).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.backward_node(node, &g, &mut grads, &mut out);
        }
        out
    }

    fn backward_node(
        &self,
        node: &Node<'a>,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        out: &mut Gradients,
    ) {
        let val = |v: Var| -> &Tensor { &self.nodes[v.0].value };
        let mut send = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param { store, id } => out.accumulate((*store, *id), g.clone()),
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    send(*a, g.matmul_nt(val(*b)));
                }
                if self.rg(*b) {
                    send(*b, val(*a).matmul_tn(g));
                }
            }
            Op::MatMulNT(a, b) => {
                if self.rg(*a) {
                    send(*a, g.matmul(val(*b)));
                }
                if self.rg(*b) {
                    send(*b, g.matmul_tn(val(*a)));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    send(*a, hadamard(g, val(*b)));
                }
                if self.rg(*b) {
                    send(*b, hadamard(g, val(*a)));
                }
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone());
                if self.rg(*row) {
                    let mut s = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in s.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    send(*row, s);
                }
            }
            Op::AddCol(a, col) => {
                send(*a, g.clone());
                if self.rg(*col) {
                    let data = (0..g.rows()).map(|r| g.row(r).iter().sum()).collect();
                    send(*col, Tensor::from_vec(g.rows(), 1, data));
                }
            }
            Op::ScaleShift(a, s) => send(*a, g.map(|v| v * s)),
            Op::Relu(a) => {
                let x = val(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect();
                send(*a, Tensor::from_vec(g.rows(), g.cols(), data));
            }
            Op::Tanh(a) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gv, &yv)| gv * (1.0 - yv * yv))
                    .collect();
                send(*a, Tensor::from_vec(g.rows(), g.cols(), data));
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gv, &yv)| gv * yv * (1.0 - yv))
                    .collect();
                send(*a, Tensor::from_vec(g.rows(), g.cols(), data));
            }
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let (gr, yr) = (g.row(r), y.row(r));
                    let inner: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, gv), yv) in ga.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *o = yv * (gv - inner);
                    }
                }
                send(*a, ga);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normed,
                inv_std,
            } => {
                let (rows, cols) = (g.rows(), g.cols());
                let tg = val(*gamma);
                if self.rg(*beta) {
                    let mut gb = Tensor::zeros(1, cols);
                    for r in 0..rows {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    send(*beta, gb);
                }
                if self.rg(*gamma) {
                    let mut gg = Tensor::zeros(1, cols);
                    for r in 0..rows {
                        for ((o, v), n) in gg.data_mut().iter_mut().zip(g.row(r)).zip(normed.row(r)) {
                            *o += v * n;
                        }
                    }
                    send(*gamma, gg);
                }
                if self.rg(*x) {
                    let mut gx = Tensor::zeros(rows, cols);
                    let n = cols as f64;
                    for r in 0..rows {
                        let gn: Vec<f64> = g.row(r).iter().zip(tg.data()).map(|(a, b)| a * b).collect();
                        let mean_gn = gn.iter().sum::<f64>() / n;
                        let mean_gn_x: f64 =
                            gn.iter().zip(normed.row(r)).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((o, gv), xh) in gx.row_mut(r).iter_mut().zip(&gn).zip(normed.row(r)) {
                            *o = inv_std[r] * (gv - mean_gn - xh * mean_gn_x);
                        }
                    }
                    send(*x, gx);
                }
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let rows = val(p).rows();
                    if self.rg(p) {
                        let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        send(p, Tensor::from_vec(rows, cols, data));
                    }
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if self.rg(p) {
                        let mut t = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            t.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        send(p, t);
                    }
                    offset += w;
                }
            }
            Op::SliceRows(a, start) => {
                let ta = val(*a);
                let mut t = Tensor::zeros(ta.rows(), ta.cols());
                let cols = ta.cols();
                t.data_mut()[start * cols..(start + g.rows()) * cols].copy_from_slice(g.data());
                send(*a, t);
            }
            Op::SliceCols(a, start) => {
                let ta = val(*a);
                let mut t = Tensor::zeros(ta.rows(), ta.cols());
                for r in 0..g.rows() {
                    t.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                }
                send(*a, t);
            }
            Op::GatherRows(a, idx) => {
                let ta = val(*a);
                let mut t = Tensor::zeros(ta.rows(), ta.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (o, v) in t.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                send(*a, t);
            }
            Op::SumAll(a) => {
                let ta = val(*a);
                send(*a, Tensor::filled(ta.rows(), ta.cols(), g.data()[0]));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let s = g.data()[0];
                let mut t = probs.clone();
                for (r, &target) in targets.iter().enumerate() {
                    if target == IGNORE_TARGET {
                        continue;
                    }
                    let row = t.row_mut(r);
                    row[target] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= s;
                    }
                }
                send(*logits, t);
            }
            Op::Custom { inputs, backward } => {
                let gs = backward(g);
                assert_eq!(gs.len(), inputs.len(), "custom backward arity");
                for (&v, gv) in inputs.iter().zip(gs) {
                    if let Some(gv) = gv {
                        send(v, gv);
                    }
                }
            }
        }
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, Tensor)]) -> (ParamStore, Vec<ParamId>) {
        let mut s = ParamStore::new();
        let ids = values.iter().map(|(n, t)| s.add(*n, t.clone())).collect();
        (s, ids)
    }

    #[test]
    fn sum_of_squares_gradient() {
        let (store, ids) = store_with(&[("x", Tensor::row_vector(vec![1.0, 2.0, 3.0]))]);
        let mut g = Graph::new();
        let x = g.param(&store, ids[0]);
        let sq = g.mul(x, x);
        let loss = g.sum_all(sq);
        assert_eq!(g.scalar(loss), 14.0);
        let grads = g.backward(loss);
        assert_eq!(grads.get(&store, ids[0]).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let (mut store, ids) = store_with(&[
            ("a", Tensor::row_vector(vec![1.0, 2.0])),
            ("b", Tensor::row_vector(vec![3.0, 4.0])),
        ]);
        store.set_frozen(ids[0], true);
        let mut g = Graph::new();
        let a = g.param(&store, ids[0]);
        let b = g.param(&store, ids[1]);
        let p = g.mul(a, b);
        let loss = g.sum_all(p);
        let grads = g.backward(loss);
        assert!(grads.get(&store, ids[0]).is_none());
        assert_eq!(grads.get(&store, ids[1]).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn shared_param_accumulates() {
        let (store, ids) = store_with(&[("w", Tensor::row_vector(vec![2.0]))]);
        let mut g = Graph::new();
        let w1 = g.param(&store, ids[0]);
        let w2 = g.param(&store, ids[0]);
        assert_eq!(w1, w2);
        let p = g.mul(w1, w2);
        let loss = g.sum_all(p);
        let grads = g.backward(loss);
        assert_eq!(grads.get(&store, ids[0]).unwrap().data(), &[4.0]);
    }

    #[test]
    fn cross_entropy_symmetric_logits() {
        let (store, ids) = store_with(&[("z", Tensor::row_vector(vec![0.0, 0.0]))]);
        let mut g = Graph::new();
        let z = g.param(&store, ids[0]);
        let loss = g.cross_entropy(z, &[0], None);
        assert!((g.scalar(loss) - 2f64.ln()).abs() < 1e-15);
        let grads = g.backward(loss);
        assert_eq!(grads.get(&store, ids[0]).unwrap().data(), &[-0.5, 0.5]);
    }

    #[test]
    fn masked_cross_entropy_ignores_excluded_columns() {
        let (store, ids) = store_with(&[("z", Tensor::row_vector(vec![0.0, 5.0, 0.0]))]);
        let mut g = Graph::new();
        let z = g.param(&store, ids[0]);
        let loss = g.cross_entropy(z, &[0], Some(&[true, false, true]));
        assert!((g.scalar(loss) - 2f64.ln()).abs() < 1e-15);
        let grads = g.backward(loss);
        assert_eq!(grads.get(&store, ids[0]).unwrap().data(), &[-0.5, 0.0, 0.5]);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 10.0], vec![-4.0, 0.5, 0.25, 7.0]]);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let gamma = g.constant(Tensor::filled(1, 4, 1.0));
        let beta = g.constant(Tensor::zeros(1, 4));
        let y = g.layer_norm(xv, gamma, beta, 1e-12);
        let t = g.value(y);
        for r in 0..2 {
            let mean: f64 = t.row(r).iter().sum::<f64>() / 4.0;
            let var: f64 = t.row(r).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }
}
