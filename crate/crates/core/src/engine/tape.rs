//! Reverse-mode differentiation over a linear tape.
//!
//! Every op appends one node holding its forward value. Because a node can
//! only reference nodes that already exist, the tape is always in
//! topological order and `backward` is a single reverse sweep.

use super::{EngineError, Tensor};

/// Probabilities are clamped to this floor before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
        rows: usize,
        cin: usize,
        cout: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow {
        x: Var,
        v: Var,
    },
    Scale(Var, f64),
    Relu(Var),
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Reduce {
        x: Var,
        kind: ReduceKind,
        outer: usize,
        len: usize,
        inner: usize,
        argmax: Vec<u32>,
    },
    Gather {
        x: Var,
        idx: Vec<usize>,
        width: usize,
    },
    Reshape(Var),
    Concat(Vec<Var>),
    CrossEntropy {
        p: Var,
        target: Vec<f64>,
        weights: Vec<f64>,
        classes: usize,
    },
    SumAll(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recording of executed ops. One tape serves one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, keyed by leaf.
#[derive(Debug)]
pub struct Gradients {
    leaves: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a `requires_grad` leaf; unreachable leaves report zeros.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.leaves.get_mut(v.0).and_then(Option::take)
    }
}

fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize), EngineError> {
    if axis >= shape.len() {
        return Err(EngineError::InvalidAxis { axis, rank: shape.len() });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// `c[m,n] = a[m,k] * b[k,n] + beta * c` with arbitrary strides on a and b.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the callers size every buffer to cover the strided extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, needs_grad: bool) -> Result<Var, EngineError> {
        if !value.is_finite() {
            return Err(EngineError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var, EngineError> {
        self.push("leaf", value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var, EngineError> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var, EngineError> {
        self.leaf(value, false)
    }

    /// `x W + b` over the last axis of `x`; leading axes are treated as rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, EngineError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let cin = *xs.last().unwrap();
        if ws.len() != 2 || ws[0] != cin {
            return Err(EngineError::ShapeMismatch { op: "linear", expected: vec![cin, 0], found: ws });
        }
        let cout = ws[1];
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(EngineError::ShapeMismatch {
                    op: "linear bias",
                    expected: vec![cout],
                    found: self.shape(b).to_vec(),
                });
            }
        }
        let rows = self.value(x).numel() / cin;
        let mut out = vec![0.0; rows * cout];
        if let Some(b) = b {
            let bias = self.value(b).data();
            for r in out.chunks_exact_mut(cout) {
                r.copy_from_slice(bias);
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(
            rows,
            cin,
            cout,
            self.value(x).data(),
            (cin, 1),
            self.value(w).data(),
            (cout, 1),
            beta,
            &mut out,
        );
        let mut shape = xs;
        *shape.last_mut().unwrap() = cout;
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push("linear", Tensor::new(shape, out)?, Op::Linear { x, w, b, rows, cin, cout }, needs)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), EngineError> {
        if self.shape(a) != self.shape(b) {
            return Err(EngineError::ShapeMismatch {
                op,
                expected: self.shape(a).to_vec(),
                found: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, node: Op) -> Result<Var, EngineError> {
        self.same_shape(op, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(op, value, node, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the vector `v` to every row of `x` (broadcast over leading axes).
    pub fn add_row(&mut self, x: Var, v: Var) -> Result<Var, EngineError> {
        let width = *self.shape(x).last().unwrap();
        if self.shape(v) != [width] {
            return Err(EngineError::ShapeMismatch {
                op: "add_row",
                expected: vec![width],
                found: self.shape(v).to_vec(),
            });
        }
        let row = self.value(v).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for r in data.chunks_exact_mut(width) {
            for (o, b) in r.iter_mut().zip(&row) {
                *o += b;
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        let needs = self.needs(x) || self.needs(v);
        self.push("add_row", value, Op::AddRow { x, v }, needs)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, EngineError> {
        let data = self.value(x).data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        let needs = self.needs(x);
        self.push("scale", value, Op::Scale(x, factor), needs)
    }

    /// Elementwise `max(0, x)`; the subgradient at zero is zero.
    pub fn relu(&mut self, x: Var) -> Result<Var, EngineError> {
        let data = self.value(x).data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        let needs = self.needs(x);
        self.push("relu", value, Op::Relu(x), needs)
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, EngineError> {
        let (outer, len, inner) = split_axis(self.shape(x), axis)?;
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            let base = o * len * inner;
            for i in 0..inner {
                let at = |j: usize| base + j * inner + i;
                let mut max = f64::NEG_INFINITY;
                for j in 0..len {
                    max = max.max(src[at(j)]);
                }
                let mut sum = 0.0;
                for j in 0..len {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    sum += e;
                }
                for j in 0..len {
                    out[at(j)] /= sum;
                }
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        let needs = self.needs(x);
        self.push("softmax", value, Op::Softmax { x, outer, len, inner }, needs)
    }

    /// Reduces `axis` away. Max routes its gradient to the lowest-index argmax.
    pub fn reduce(&mut self, x: Var, kind: ReduceKind, axis: usize) -> Result<Var, EngineError> {
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_axis(&shape, axis)?;
        if len == 0 {
            return Err(EngineError::EmptyAxis { axis });
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        match kind {
            ReduceKind::Sum | ReduceKind::Mean => {
                for o in 0..outer {
                    let dst = &mut out[o * inner..(o + 1) * inner];
                    for j in 0..len {
                        let s = &src[(o * len + j) * inner..(o * len + j + 1) * inner];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += v;
                        }
                    }
                }
                if kind == ReduceKind::Mean {
                    let n = len as f64;
                    out.iter_mut().for_each(|v| *v /= n);
                }
            }
            ReduceKind::Max => {
                argmax = vec![0u32; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut best = src[o * len * inner + i];
                        let mut arg = 0;
                        for j in 1..len {
                            let v = src[(o * len + j) * inner + i];
                            if v > best {
                                best = v;
                                arg = j;
                            }
                        }
                        out[o * inner + i] = best;
                        argmax[o * inner + i] = arg as u32;
                    }
                }
            }
        }
        let mut out_shape: Vec<usize> = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let value = Tensor::new(out_shape, out)?;
        let needs = self.needs(x);
        self.push("reduce", value, Op::Reduce { x, kind, outer, len, inner, argmax }, needs)
    }

    /// `out[a, b, :] = x[idx[a, b], :]` for a two-dimensional `x`.
    ///
    /// The output shape is `index_shape` followed by the row width of `x`.
    pub fn gather(&mut self, x: Var, indices: &[usize], index_shape: &[usize]) -> Result<Var, EngineError> {
        let xs = self.shape(x);
        if xs.len() != 2 {
            return Err(EngineError::ShapeMismatch { op: "gather", expected: vec![0, 0], found: xs.to_vec() });
        }
        let (n, width) = (xs[0], xs[1]);
        if index_shape.iter().product::<usize>() != indices.len() {
            return Err(EngineError::ShapeMismatch {
                op: "gather indices",
                expected: index_shape.to_vec(),
                found: vec![indices.len()],
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(EngineError::IndexOutOfRange { index: bad, bound: n });
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            out.extend_from_slice(&src[i * width..(i + 1) * width]);
        }
        let mut shape = index_shape.to_vec();
        shape.push(width);
        let value = Tensor::new(shape, out)?;
        let needs = self.needs(x);
        self.push("gather", value, Op::Gather { x, idx: indices.to_vec(), width }, needs)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, EngineError> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        let needs = self.needs(x);
        self.push("reshape", value, Op::Reshape(x), needs)
    }

    /// Stacks tensors along axis 0; trailing extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, EngineError> {
        let first = parts.first().ok_or(EngineError::EmptyBatch)?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            if self.shape(p)[1..] != tail[..] {
                return Err(EngineError::ShapeMismatch {
                    op: "concat",
                    expected: tail,
                    found: self.shape(p)[1..].to_vec(),
                });
            }
            rows += self.shape(p)[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        let value = Tensor::new(shape, data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push("concat", value, Op::Concat(parts.to_vec()), needs)
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var, EngineError> {
        let s = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push("sum_all", Tensor::scalar(s), Op::SumAll(x), needs)
    }

    /// Mean cross-entropy `-(1/|P|) Σ_i Σ_c y_ic ln p_ic` over the rows of `p`.
    pub fn cross_entropy(&mut self, p: Var, target: &Tensor) -> Result<Var, EngineError> {
        let rows = self.shape(p)[0];
        let w = vec![1.0 / rows as f64; rows];
        self.weighted_cross_entropy(p, target, &w)
    }

    /// `-Σ_i w_i Σ_c y_ic ln max(p_ic, 1e-12)`.
    pub fn weighted_cross_entropy(&mut self, p: Var, target: &Tensor, weights: &[f64]) -> Result<Var, EngineError> {
        let ps = self.shape(p).to_vec();
        if ps.len() != 2 || target.shape() != ps.as_slice() {
            return Err(EngineError::ShapeMismatch {
                op: "cross_entropy",
                expected: ps,
                found: target.shape().to_vec(),
            });
        }
        let (rows, classes) = (ps[0], ps[1]);
        if weights.len() != rows {
            return Err(EngineError::ShapeMismatch {
                op: "cross_entropy weights",
                expected: vec![rows],
                found: vec![weights.len()],
            });
        }
        let probs = self.value(p).data();
        let mut loss = 0.0;
        for i in 0..rows {
            let row = &probs[i * classes..(i + 1) * classes];
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(EngineError::NotNormalized { row: i, sum: total });
            }
            let mut acc = 0.0;
            for c in 0..classes {
                let y = target.data()[i * classes + c];
                if y != 0.0 {
                    acc += y * row[c].max(PROB_FLOOR).ln();
                }
            }
            loss -= weights[i] * acc;
        }
        let needs = self.needs(p);
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy { p, target: target.data().to_vec(), weights: weights.to_vec(), classes },
            needs,
        )
    }

    /// Hash of every data-dependent branch taken by the forward pass: ReLU
    /// activity, max-pool winners and gather indices.
    ///
    /// Two forward passes with equal signatures ran the same piecewise-smooth
    /// function, which is what a finite-difference probe needs.
    pub fn branch_signature(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |w: u64| {
            h ^= w;
            h = h.wrapping_mul(PRIME);
        };
        for node in &self.nodes {
            match &node.op {
                Op::Relu(_) => {
                    for chunk in node.value.data().chunks(64) {
                        let bits = chunk.iter().enumerate().fold(0u64, |acc, (i, &v)| acc | (u64::from(v > 0.0) << i));
                        mix(bits);
                    }
                }
                Op::Reduce { argmax, .. } => argmax.iter().for_each(|&a| mix(u64::from(a))),
                Op::Gather { idx, .. } => idx.iter().for_each(|&i| mix(i as u64)),
                _ => {}
            }
        }
        h
    }

    /// Gradients of a scalar `loss` with respect to every `requires_grad` leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients, EngineError> {
        if !self.value(loss).is_scalar() {
            return Err(EngineError::NonScalarLoss { shape: self.shape(loss).to_vec() });
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let mut leaves = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let grad = if matches!(node.op, Op::Leaf) && node.needs_grad {
                let shape = node.value.shape().to_vec();
                Some(match grads.get_mut(i).and_then(Option::take) {
                    Some(g) => Tensor::new(shape, g)?,
                    None => Tensor::zeros(&shape),
                })
            } else {
                None
            };
            leaves.push(grad);
        }
        Ok(Gradients { leaves })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.numel()]))
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            &Op::Linear { x, w, b, rows, cin, cout } => {
                if let Some(dx) = self.slot(grads, x) {
                    // dx[rows, cin] += g[rows, cout] * W^T
                    gemm(rows, cout, cin, g, (cout, 1), self.value(w).data(), (1, cout), 1.0, dx);
                }
                if let Some(dw) = self.slot(grads, w) {
                    // dW[cin, cout] += x^T * g
                    gemm(cin, rows, cout, self.value(x).data(), (1, cin), g, (cout, 1), 1.0, dw);
                }
                if let Some(b) = b {
                    if let Some(db) = self.slot(grads, b) {
                        for r in g.chunks_exact(cout) {
                            for (d, v) in db.iter_mut().zip(r) {
                                *d += v;
                            }
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = self.slot(grads, v) {
                        d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                    }
                }
            }
            &Op::Sub(a, b) => {
                if let Some(d) = self.slot(grads, a) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                if let Some(d) = self.slot(grads, b) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d -= g);
                }
            }
            &Op::Mul(a, b) => {
                if let Some(d) = self.slot(grads, a) {
                    let other = self.value(b).data();
                    for ((d, g), o) in d.iter_mut().zip(g).zip(other) {
                        *d += g * o;
                    }
                }
                if let Some(d) = self.slot(grads, b) {
                    let other = self.value(a).data();
                    for ((d, g), o) in d.iter_mut().zip(g).zip(other) {
                        *d += g * o;
                    }
                }
            }
            &Op::AddRow { x, v } => {
                if let Some(d) = self.slot(grads, x) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                if let Some(dv) = self.slot(grads, v) {
                    let width = dv.len();
                    for r in g.chunks_exact(width) {
                        dv.iter_mut().zip(r).for_each(|(d, g)| *d += g);
                    }
                }
            }
            &Op::Scale(x, factor) => {
                if let Some(d) = self.slot(grads, x) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += factor * g);
                }
            }
            &Op::Relu(x) => {
                let out = node.value.data();
                if let Some(d) = self.slot(grads, x) {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(out) {
                        if *y > 0.0 {
                            *d += g;
                        }
                    }
                }
            }
            &Op::Softmax { x, outer, len, inner } => {
                let y = node.value.data();
                if let Some(d) = self.slot(grads, x) {
                    for o in 0..outer {
                        let base = o * len * inner;
                        for i in 0..inner {
                            let mut dot = 0.0;
                            for j in 0..len {
                                let at = base + j * inner + i;
                                dot += g[at] * y[at];
                            }
                            for j in 0..len {
                                let at = base + j * inner + i;
                                d[at] += y[at] * (g[at] - dot);
                            }
                        }
                    }
                }
            }
            Op::Reduce { x, kind, outer, len, inner, argmax } => {
                let (outer, len, inner) = (*outer, *len, *inner);
                if let Some(d) = self.slot(grads, *x) {
                    match kind {
                        ReduceKind::Sum | ReduceKind::Mean => {
                            let factor = if *kind == ReduceKind::Mean { 1.0 / len as f64 } else { 1.0 };
                            for o in 0..outer {
                                let src = &g[o * inner..(o + 1) * inner];
                                for j in 0..len {
                                    let dst = &mut d[(o * len + j) * inner..(o * len + j + 1) * inner];
                                    dst.iter_mut().zip(src).for_each(|(d, g)| *d += factor * g);
                                }
                            }
                        }
                        ReduceKind::Max => {
                            for o in 0..outer {
                                for i in 0..inner {
                                    let j = argmax[o * inner + i] as usize;
                                    d[(o * len + j) * inner + i] += g[o * inner + i];
                                }
                            }
                        }
                    }
                }
            }
            Op::Gather { x, idx, width } => {
                if let Some(d) = self.slot(grads, *x) {
                    for (r, &i) in idx.iter().enumerate() {
                        let dst = &mut d[i * width..(i + 1) * width];
                        dst.iter_mut().zip(&g[r * width..(r + 1) * width]).for_each(|(d, g)| *d += g);
                    }
                }
            }
            &Op::Reshape(x) => {
                if let Some(d) = self.slot(grads, x) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    if let Some(d) = self.slot(grads, p) {
                        d.iter_mut().zip(&g[offset..offset + n]).for_each(|(d, g)| *d += g);
                    }
                    offset += n;
                }
            }
            &Op::SumAll(x) => {
                if let Some(d) = self.slot(grads, x) {
                    d.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::CrossEntropy { p, target, weights, classes } => {
                let probs = self.value(*p).data();
                if let Some(d) = self.slot(grads, *p) {
                    for (k, (dk, &pk)) in d.iter_mut().zip(probs).enumerate() {
                        let y = target[k];
                        // The clamp only bounds the reported value. Its
                        // gradient passes straight through, otherwise a
                        // confidently wrong prediction would never recover.
                        if y != 0.0 {
                            *dk -= g[0] * weights[k / classes] * y / pk.max(f64::MIN_POSITIVE);
                        }
                    }
                }
            }
        }
    }
}
