//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! Operations append nodes to an arena and return a [`Var`] handle; the
//! arena order is a valid topological order, so [`Tape::backward`] is a
//! single reverse sweep. Non-finite forward values are recorded as a
//! [`NumericFault`] on the first offending node and surfaced by
//! [`Tape::check`].

use std::collections::HashMap;
use std::sync::Arc;

use super::{ParamId, ParamSet, Real, Segments, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("non-finite value produced by {op} (node {node})")]
pub struct NumericFault {
    pub op: &'static str,
    pub node: usize,
}

enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Ln(Var),
    Clamp(Var, T, T),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Arc<Vec<usize>>),
    SegmentMean(Var, Arc<Segments>),
    SegmentMax(Var, Vec<usize>),
    SegmentWeighted(Var, Arc<Segments>, Var),
    SlotSoftmax(Var, Arc<Segments>),
    RowSoftmax(Var),
    RowSum(Var),
    SumAll(Var),
    MeanAll(Var),
    RowNorm(Var),
    NormalizeRows(Var, Vec<T>),
    OuterProject(Var, Var, Var),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf | Param => vec![],
            MatMul(a, b)
            | Add(a, b)
            | Sub(a, b)
            | Mul(a, b)
            | AddRow(a, b)
            | MulCol(a, b)
            | SegmentWeighted(a, _, b) => vec![*a, *b],
            OuterProject(a, b, c) => vec![*a, *b, *c],
            ConcatCols(vs) => vs.clone(),
            Affine(a, _)
            | Sigmoid(a)
            | Tanh(a)
            | Relu(a)
            | Ln(a)
            | Clamp(a, _, _)
            | SliceCols(a, _)
            | GatherRows(a, _)
            | SegmentMean(a, _)
            | SegmentMax(a, _)
            | SlotSoftmax(a, _)
            | RowSoftmax(a)
            | RowSum(a)
            | SumAll(a)
            | MeanAll(a)
            | RowNorm(a)
            | NormalizeRows(a, _) => vec![*a],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Single-threaded operation recorder.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
    fault: Option<NumericFault>,
    grad_enabled: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape<T: Real>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            fault: None,
            grad_enabled: true,
        }
    }

    /// A tape that records values only; [`Tape::backward`] is rejected.
    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn fault(&self) -> Option<&NumericFault> {
        self.fault.as_ref()
    }

    pub fn check(&self) -> Result<(), NumericFault> {
        match &self.fault {
            Some(f) => Err(f.clone()),
            None => Ok(()),
        }
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>) -> Var {
        let needs_grad = self.grad_enabled
            && match op {
                Op::Leaf => false,
                Op::Param => true,
                _ => op.inputs().iter().any(|v| self.nodes[v.0].needs_grad),
            };
        let id = self.nodes.len();
        if self.fault.is_none() && !value.is_finite() {
            self.fault = Some(NumericFault { op: name, node: id });
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(id)
    }

    /// Records a constant input (no gradient).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push("constant", value, Op::Leaf)
    }

    /// Records a free variable whose gradient is tracked.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        let v = self.push("variable", value, Op::Leaf);
        self.nodes[v.0].needs_grad = self.grad_enabled;
        v
    }

    /// Records a parameter; repeated calls for the same id return the same
    /// handle so gradients from every use accumulate in one place.
    pub fn param(&mut self, set: &ParamSet<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push("param", set.get(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let out = av.matmul(bv)?;
        Ok(self.push("matmul", out, Op::MatMul(a, b)))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(name, av, bv)?;
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data)?;
        Ok(self.push(name, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `a[n×m] + b[1×m]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(TensorError::Shape {
                op: "add_row",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (x, &y) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *x += y;
            }
        }
        Ok(self.push("add_row", out, Op::AddRow(a, b)))
    }

    /// `a[n×m] ⊙ s[n×1]`: scales each row by its own scalar.
    pub fn mul_col(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        let (av, sv) = (self.value(a), self.value(s));
        if sv.cols() != 1 || sv.rows() != av.rows() {
            return Err(TensorError::Shape {
                op: "mul_col",
                lhs: av.shape(),
                rhs: sv.shape(),
            });
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            let k = sv.data()[r];
            out.row_mut(r).iter_mut().for_each(|x| *x *= k);
        }
        Ok(self.push("mul_col", out, Op::MulCol(a, s)))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        self.push("affine", out, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        self.affine(a, k, T::zero())
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -T::one(), T::one())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.tanh());
        self.push("tanh", out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::zero()));
        self.push("relu", out, Op::Relu(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.ln());
        self.push("ln", out, Op::Ln(a))
    }

    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let out = self.value(a).map(|x| x.max(lo).min(hi));
        self.push("clamp", out, Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat_cols",
            msg: "no inputs".into(),
        })?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(TensorError::Shape {
                    op: "concat_cols",
                    lhs: self.value(*first).shape(),
                    rhs: pv.shape(),
                });
            }
            cols += pv.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let pv = self.value(p);
                out.row_mut(r)[c0..c0 + pv.cols()].copy_from_slice(pv.row(r));
                c0 += pv.cols();
            }
        }
        Ok(self.push("concat_cols", out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var, TensorError> {
        let av = self.value(a);
        if start + width > av.cols() {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                msg: format!("columns {start}..{} out of {}", start + width, av.cols()),
            });
        }
        let mut out = Tensor::zeros(av.rows(), width);
        for r in 0..av.rows() {
            out.row_mut(r)
                .copy_from_slice(&av.row(r)[start..start + width]);
        }
        Ok(self.push("slice_cols", out, Op::SliceCols(a, start)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var, TensorError> {
        let av = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.rows()) {
            return Err(TensorError::Invalid {
                op: "gather_rows",
                msg: format!("row {bad} out of {}", av.rows()),
            });
        }
        let mut out = Tensor::zeros(idx.len(), av.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(av.row(i));
        }
        Ok(self.push("gather_rows", out, Op::GatherRows(a, idx)))
    }

    fn check_segments(
        &self,
        op: &'static str,
        a: Var,
        seg: &Segments,
    ) -> Result<(), TensorError> {
        let rows = self.value(a).rows();
        if let Some(m) = seg.max_index() {
            if m >= rows {
                return Err(TensorError::Invalid {
                    op,
                    msg: format!("segment index {m} out of {rows} rows"),
                });
            }
        }
        if let Some(i) = (0..seg.len()).find(|&i| seg.segment_len(i) == 0) {
            return Err(TensorError::Invalid {
                op,
                msg: format!("segment {i} has no valid slot"),
            });
        }
        Ok(())
    }

    /// Row mean of each segment's source rows.
    pub fn segment_mean(&mut self, a: Var, seg: Arc<Segments>) -> Result<Var, TensorError> {
        self.check_segments("segment_mean", a, &seg)?;
        let av = self.value(a);
        let mut out = Tensor::zeros(seg.len(), av.cols());
        for (i, s) in seg.iter().enumerate() {
            let row = out.row_mut(i);
            for &j in s {
                for (x, &y) in row.iter_mut().zip(av.row(j)) {
                    *x += y;
                }
            }
            let n = T::lit(s.len() as f64);
            row.iter_mut().for_each(|x| *x = *x / n);
        }
        Ok(self.push("segment_mean", out, Op::SegmentMean(a, seg)))
    }

    /// Elementwise max of each segment's source rows. Ties resolve to the
    /// earliest slot.
    pub fn segment_max(&mut self, a: Var, seg: Arc<Segments>) -> Result<Var, TensorError> {
        self.check_segments("segment_max", a, &seg)?;
        let av = self.value(a);
        let cols = av.cols();
        let mut out = Tensor::zeros(seg.len(), cols);
        let mut argmax = vec![0usize; seg.len() * cols];
        for (i, s) in seg.iter().enumerate() {
            let row = out.row_mut(i);
            row.copy_from_slice(av.row(s[0]));
            argmax[i * cols..(i + 1) * cols].fill(s[0]);
            for &j in &s[1..] {
                for (c, &y) in av.row(j).iter().enumerate() {
                    if y > row[c] {
                        row[c] = y;
                        argmax[i * cols + c] = j;
                    }
                }
            }
        }
        Ok(self.push("segment_max", out, Op::SegmentMax(a, argmax)))
    }

    /// `out[i] = Σ_slot w[i, slot] · a[seg_i[slot]]`; `w` has one column per
    /// slot and columns past a segment's length are ignored.
    pub fn segment_weighted(
        &mut self,
        a: Var,
        seg: Arc<Segments>,
        w: Var,
    ) -> Result<Var, TensorError> {
        self.check_segments("segment_weighted", a, &seg)?;
        let (av, wv) = (self.value(a), self.value(w));
        if wv.rows() != seg.len() || wv.cols() < seg.max_len() {
            return Err(TensorError::Shape {
                op: "segment_weighted",
                lhs: (seg.len(), seg.max_len()),
                rhs: wv.shape(),
            });
        }
        let mut out = Tensor::zeros(seg.len(), av.cols());
        for (i, s) in seg.iter().enumerate() {
            let row = out.row_mut(i);
            for (slot, &j) in s.iter().enumerate() {
                let k = wv.get(i, slot);
                for (x, &y) in row.iter_mut().zip(av.row(j)) {
                    *x += k * y;
                }
            }
        }
        Ok(self.push("segment_weighted", out, Op::SegmentWeighted(a, seg, w)))
    }

    /// Softmax of a `1×S` gate vector restricted to the first `len` slots of
    /// each segment; output is `segments × S` with zeros in unused slots.
    pub fn slot_softmax(&mut self, gates: Var, seg: Arc<Segments>) -> Result<Var, TensorError> {
        let gv = self.value(gates);
        if gv.rows() != 1 || seg.max_len() > gv.cols() {
            return Err(TensorError::Shape {
                op: "slot_softmax",
                lhs: (1, seg.max_len()),
                rhs: gv.shape(),
            });
        }
        let width = gv.cols();
        let mut out = Tensor::zeros(seg.len(), width);
        for i in 0..seg.len() {
            let len = seg.segment_len(i);
            if len == 0 {
                continue;
            }
            let g = &gv.data()[..len];
            let m = g.iter().copied().fold(T::neg_infinity(), T::max);
            let row = out.row_mut(i);
            let mut z = T::zero();
            for (x, &y) in row.iter_mut().zip(g) {
                *x = (y - m).exp();
                z += *x;
            }
            row[..len].iter_mut().for_each(|x| *x = *x / z);
        }
        Ok(self.push("slot_softmax", out, Op::SlotSoftmax(gates, seg)))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                z += *x;
            }
            row.iter_mut().for_each(|x| *x = *x / z);
        }
        self.push("row_softmax", out, Op::RowSoftmax(a))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows()).map(|r| av.row(r).iter().copied().sum()).collect();
        let out = Tensor::from_vec(av.rows(), 1, data).expect("row_sum shape");
        self.push("row_sum", out, Op::RowSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = T::lit(av.len().max(1) as f64);
        let s: T = av.data().iter().copied().sum();
        self.push("mean", Tensor::scalar(s / n), Op::MeanAll(a))
    }

    /// Euclidean norm of each row, as an `n×1` column.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows())
            .map(|r| av.row(r).iter().map(|&x| x * x).sum::<T>().sqrt())
            .collect();
        let out = Tensor::from_vec(av.rows(), 1, data).expect("row_norm shape");
        self.push("row_norm", out, Op::RowNorm(a))
    }

    /// Scales each row to unit Euclidean norm; zero rows stay zero.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let mut norms = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n = row.iter().map(|&x| x * x).sum::<T>().sqrt();
            if n > T::zero() {
                row.iter_mut().for_each(|x| *x = *x / n);
            }
            norms.push(n);
        }
        self.push("normalize_rows", out, Op::NormalizeRows(a, norms))
    }

    /// Row-wise `(a_r b_rᵀ) w`, materializing every `d×d` outer product.
    /// Reference form of the rank-one cross; model code uses the
    /// associative form instead.
    pub fn outer_project(&mut self, a: Var, b: Var, w: Var) -> Result<Var, TensorError> {
        let (av, bv, wv) = (self.value(a), self.value(b), self.value(w));
        same_shape("outer_project", av, bv)?;
        let d = av.cols();
        if wv.shape() != (d, 1) {
            return Err(TensorError::Shape {
                op: "outer_project",
                lhs: (d, 1),
                rhs: wv.shape(),
            });
        }
        let mut out = Tensor::zeros(av.rows(), d);
        let mut outer = vec![T::zero(); d * d];
        for r in 0..av.rows() {
            for (i, &x) in av.row(r).iter().enumerate() {
                for (j, &y) in bv.row(r).iter().enumerate() {
                    outer[i * d + j] = x * y;
                }
            }
            for i in 0..d {
                let mut s = T::zero();
                for j in 0..d {
                    s += outer[i * d + j] * wv.data()[j];
                }
                out.set(r, i, s);
            }
        }
        Ok(self.push("outer_project", out, Op::OuterProject(a, b, w)))
    }

    /// Populates gradients of every node reachable from `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        if !self.grad_enabled {
            return Err(TensorError::Invalid {
                op: "backward",
                msg: "tape was created for inference".into(),
            });
        }
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].needs_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut Tensor<T>)| {
            let n = &self.nodes[v.0];
            if !n.needs_grad {
                return;
            }
            let buf = grads[v.0]
                .get_or_insert_with(|| Tensor::zeros(n.value.rows(), n.value.cols()));
            f(buf);
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let unary = |a: Var, f: &dyn Fn(usize) -> T, acc: &mut dyn FnMut(Var, &mut dyn FnMut(&mut Tensor<T>))| {
            acc(a, &mut |buf| {
                for (k, x) in buf.data_mut().iter_mut().enumerate() {
                    *x += f(k);
                }
            });
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                acc(*a, &mut |buf| {
                    T::gemm(m, n, k, T::one(), g.data(), false, bv.data(), true, T::one(), buf.data_mut())
                });
                acc(*b, &mut |buf| {
                    T::gemm(k, m, n, T::one(), av.data(), true, g.data(), false, T::one(), buf.data_mut())
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |buf| buf.add_assign(g));
                acc(*b, &mut |buf| buf.add_assign(g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |buf| buf.add_assign(g));
                acc(*b, &mut |buf| {
                    for (x, &d) in buf.data_mut().iter_mut().zip(g.data()) {
                        *x -= d;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                unary(*a, &|k| g.data()[k] * bv.data()[k], &mut acc);
                unary(*b, &|k| g.data()[k] * av.data()[k], &mut acc);
            }
            Op::AddRow(a, b) => {
                acc(*a, &mut |buf| buf.add_assign(g));
                acc(*b, &mut |buf| {
                    for r in 0..g.rows() {
                        for (x, &d) in buf.data_mut().iter_mut().zip(g.row(r)) {
                            *x += d;
                        }
                    }
                });
            }
            Op::MulCol(a, s) => {
                let (av, sv) = (val(*a), val(*s));
                let cols = av.cols();
                unary(*a, &|k| g.data()[k] * sv.data()[k / cols], &mut acc);
                acc(*s, &mut |buf| {
                    for r in 0..g.rows() {
                        let dot: T = g.row(r).iter().zip(av.row(r)).map(|(&p, &q)| p * q).sum();
                        buf.data_mut()[r] += dot;
                    }
                });
            }
            Op::Affine(a, scale) => unary(*a, &|k| g.data()[k] * *scale, &mut acc),
            Op::Sigmoid(a) => unary(
                *a,
                &|k| {
                    let s = y.data()[k];
                    g.data()[k] * s * (T::one() - s)
                },
                &mut acc,
            ),
            Op::Tanh(a) => unary(
                *a,
                &|k| {
                    let t = y.data()[k];
                    g.data()[k] * (T::one() - t * t)
                },
                &mut acc,
            ),
            Op::Relu(a) => {
                let av = val(*a);
                unary(
                    *a,
                    &|k| {
                        if av.data()[k] > T::zero() {
                            g.data()[k]
                        } else {
                            T::zero()
                        }
                    },
                    &mut acc,
                )
            }
            Op::Ln(a) => {
                let av = val(*a);
                unary(*a, &|k| g.data()[k] / av.data()[k], &mut acc)
            }
            Op::Clamp(a, lo, hi) => {
                let av = val(*a);
                unary(
                    *a,
                    &|k| {
                        let x = av.data()[k];
                        if x >= *lo && x <= *hi {
                            g.data()[k]
                        } else {
                            T::zero()
                        }
                    },
                    &mut acc,
                )
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let w = val(p).cols();
                    acc(p, &mut |buf| {
                        for r in 0..g.rows() {
                            for (x, &d) in buf.row_mut(r).iter_mut().zip(&g.row(r)[c0..c0 + w]) {
                                *x += d;
                            }
                        }
                    });
                    c0 += w;
                }
            }
            Op::SliceCols(a, start) => {
                let w = g.cols();
                acc(*a, &mut |buf| {
                    for r in 0..g.rows() {
                        for (x, &d) in buf.row_mut(r)[*start..*start + w].iter_mut().zip(g.row(r)) {
                            *x += d;
                        }
                    }
                });
            }
            Op::GatherRows(a, idx) => acc(*a, &mut |buf| {
                for (r, &src) in idx.iter().enumerate() {
                    for (x, &d) in buf.row_mut(src).iter_mut().zip(g.row(r)) {
                        *x += d;
                    }
                }
            }),
            Op::SegmentMean(a, seg) => acc(*a, &mut |buf| {
                for (i, s) in seg.iter().enumerate() {
                    let inv = T::one() / T::lit(s.len() as f64);
                    for &j in s {
                        for (x, &d) in buf.row_mut(j).iter_mut().zip(g.row(i)) {
                            *x += d * inv;
                        }
                    }
                }
            }),
            Op::SegmentMax(a, argmax) => acc(*a, &mut |buf| {
                let cols = g.cols();
                for (k, &src) in argmax.iter().enumerate() {
                    let c = k % cols;
                    let cur = buf.get(src, c);
                    buf.set(src, c, cur + g.data()[k]);
                }
            }),
            Op::SegmentWeighted(a, seg, w) => {
                let (av, wv) = (val(*a), val(*w));
                acc(*a, &mut |buf| {
                    for (i, s) in seg.iter().enumerate() {
                        for (slot, &j) in s.iter().enumerate() {
                            let k = wv.get(i, slot);
                            for (x, &d) in buf.row_mut(j).iter_mut().zip(g.row(i)) {
                                *x += k * d;
                            }
                        }
                    }
                });
                acc(*w, &mut |buf| {
                    for (i, s) in seg.iter().enumerate() {
                        for (slot, &j) in s.iter().enumerate() {
                            let dot: T = g.row(i).iter().zip(av.row(j)).map(|(&p, &q)| p * q).sum();
                            let cur = buf.get(i, slot);
                            buf.set(i, slot, cur + dot);
                        }
                    }
                });
            }
            Op::SlotSoftmax(gates, seg) => acc(*gates, &mut |buf| {
                for i in 0..seg.len() {
                    let len = seg.segment_len(i);
                    let p = &y.row(i)[..len];
                    let dg = &g.row(i)[..len];
                    let inner: T = p.iter().zip(dg).map(|(&a, &b)| a * b).sum();
                    for s in 0..len {
                        buf.data_mut()[s] += p[s] * (dg[s] - inner);
                    }
                }
            }),
            Op::RowSoftmax(a) => acc(*a, &mut |buf| {
                for r in 0..g.rows() {
                    let (p, dg) = (y.row(r), g.row(r));
                    let inner: T = p.iter().zip(dg).map(|(&a, &b)| a * b).sum();
                    for (c, x) in buf.row_mut(r).iter_mut().enumerate() {
                        *x += p[c] * (dg[c] - inner);
                    }
                }
            }),
            Op::RowSum(a) => acc(*a, &mut |buf| {
                for r in 0..buf.rows() {
                    let d = g.data()[r];
                    buf.row_mut(r).iter_mut().for_each(|x| *x += d);
                }
            }),
            Op::SumAll(a) => {
                let d = g.item();
                acc(*a, &mut |buf| buf.data_mut().iter_mut().for_each(|x| *x += d));
            }
            Op::MeanAll(a) => {
                let n = T::lit(val(*a).len().max(1) as f64);
                let d = g.item() / n;
                acc(*a, &mut |buf| buf.data_mut().iter_mut().for_each(|x| *x += d));
            }
            Op::RowNorm(a) => {
                let av = val(*a);
                acc(*a, &mut |buf| {
                    for r in 0..buf.rows() {
                        let n = y.data()[r];
                        if n > T::zero() {
                            let k = g.data()[r] / n;
                            for (x, &v) in buf.row_mut(r).iter_mut().zip(av.row(r)) {
                                *x += k * v;
                            }
                        }
                    }
                });
            }
            Op::NormalizeRows(a, norms) => acc(*a, &mut |buf| {
                for r in 0..buf.rows() {
                    let n = norms[r];
                    if n > T::zero() {
                        let (u, dg) = (y.row(r), g.row(r));
                        let inner: T = u.iter().zip(dg).map(|(&p, &q)| p * q).sum();
                        for (c, x) in buf.row_mut(r).iter_mut().enumerate() {
                            *x += (dg[c] - u[c] * inner) / n;
                        }
                    }
                }
            }),
            Op::OuterProject(a, b, w) => {
                let (av, bv, wv) = (val(*a), val(*b), val(*w));
                let d = av.cols();
                // out_r[i] = a_r[i] Σ_j b_r[j] w[j]
                acc(*a, &mut |buf| {
                    for r in 0..buf.rows() {
                        let s: T = bv.row(r).iter().zip(wv.data()).map(|(&p, &q)| p * q).sum();
                        for (x, &dg) in buf.row_mut(r).iter_mut().zip(g.row(r)) {
                            *x += dg * s;
                        }
                    }
                });
                acc(*b, &mut |buf| {
                    for r in 0..buf.rows() {
                        let t: T = g.row(r).iter().zip(av.row(r)).map(|(&p, &q)| p * q).sum();
                        for (x, &wj) in buf.row_mut(r).iter_mut().zip(wv.data()) {
                            *x += t * wj;
                        }
                    }
                });
                acc(*w, &mut |buf| {
                    for r in 0..av.rows() {
                        let t: T = g.row(r).iter().zip(av.row(r)).map(|(&p, &q)| p * q).sum();
                        for j in 0..d {
                            buf.data_mut()[j] += t * bv.get(r, j);
                        }
                    }
                });
            }
        }
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// `None` when `v` does not influence the loss or carries no gradient.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}
