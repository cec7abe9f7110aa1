//! Reverse-mode differentiation over a linear tape of tensor ops.
//!
//! A forward pass appends nodes to a [`Tape`]; [`Tape::backward`] walks the
//! nodes in reverse and returns a [`Gradients`] table. Parameters are
//! borrowed, not copied, so the tape lives only as long as the forward and
//! backward pass over one batch.

use std::ops::Deref;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::kernels::{col2im_add, im2col, transpose, ConvGeom, SparsePattern};
use super::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value<'p, T> {
    Owned(Vec<T>),
    Borrowed(&'p [T]),
}

impl<T> Deref for Value<'_, T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        match self {
            Value::Owned(v) => v,
            Value::Borrowed(v) => v,
        }
    }
}

enum Op<T> {
    Leaf,
    Param(usize),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    SparseLinear {
        x: Var,
        w: Var,
        b: Option<Var>,
        pattern: Arc<SparsePattern>,
    },
    Relu(Var),
    MaxPool2 {
        x: Var,
        argmax: Vec<u32>,
    },
    Reshape(Var),
    GlobalAvgPool(Var),
    Add(Var, Var),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    Mse {
        pred: Var,
        target: Vec<T>,
    },
}

struct Node<'p, T> {
    shape: Vec<usize>,
    value: Value<'p, T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<'p, T> {
    nodes: Vec<Node<'p, T>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<'p, T> {
        &self.nodes[v.0]
    }

    fn needs(&self, vars: &[Option<Var>]) -> bool {
        vars.iter().flatten().any(|v| self.node(*v).requires_grad)
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, tensor: Tensor<T>) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.into_data(), Op::Leaf, false)
    }

    /// Differentiable leaf owned by the tape.
    pub fn variable(&mut self, tensor: Tensor<T>) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.into_data(), Op::Leaf, true)
    }

    /// Differentiable leaf borrowing a parameter; `slot` identifies it in
    /// the returned [`Gradients`].
    pub fn param(&mut self, slot: usize, tensor: &'p Tensor<T>) -> Var {
        self.nodes.push(Node {
            shape: tensor.shape().to_vec(),
            value: Value::Borrowed(tensor.data()),
            op: Op::Param(slot),
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    /// `x·Wᵀ + b` for `x: [batch, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(shape_err("linear", xs, ws));
        }
        let (batch, inp, out) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            if self.shape(b) != [out] {
                return Err(shape_err("linear bias", self.shape(b), &[out]));
            }
        }
        let mut y = vec![T::zero(); batch * out];
        if let Some(b) = b {
            let bias = self.value(b);
            for row in y.chunks_exact_mut(out) {
                row.copy_from_slice(bias);
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        T::gemm(
            batch,
            inp,
            out,
            T::one(),
            self.value(x),
            inp as isize,
            1,
            self.value(w),
            1,
            inp as isize,
            beta,
            &mut y,
            out as isize,
            1,
        );
        let rg = self.needs(&[Some(x), Some(w), b]);
        Ok(self.push(vec![batch, out], y, Op::Linear { x, w, b }, rg))
    }

    /// Convolution of `x: [batch, in_c, h, w]` with `W: [out_c, in_c, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || ws[2] != ws[3] {
            return Err(shape_err("conv2d", xs, ws));
        }
        let geom = ConvGeom {
            batch: xs[0],
            in_c: xs[1],
            h: xs[2],
            w: xs[3],
            out_c: ws[0],
            kernel: ws[2],
            stride,
            pad,
        };
        if !geom.valid() {
            return Err(shape_err("conv2d", xs, ws));
        }
        if let Some(b) = b {
            if self.shape(b) != [geom.out_c] {
                return Err(shape_err("conv2d bias", self.shape(b), &[geom.out_c]));
            }
        }
        let (positions, patch) = (geom.out_positions(), geom.patch_len());
        let in_len = geom.in_c * geom.h * geom.w;
        let out_len = geom.out_c * positions;
        let mut y = vec![T::zero(); geom.batch * out_len];
        let mut cols = vec![T::zero(); patch * positions];
        let (xv, wv) = (self.value(x), self.value(w));
        let bias = b.map(|b| self.value(b));
        for n in 0..geom.batch {
            im2col(&geom, &xv[n * in_len..(n + 1) * in_len], &mut cols);
            let yn = &mut y[n * out_len..(n + 1) * out_len];
            if let Some(bias) = bias {
                for (o, plane) in yn.chunks_exact_mut(positions).enumerate() {
                    plane.fill(bias[o]);
                }
            }
            T::gemm(
                geom.out_c,
                patch,
                positions,
                T::one(),
                wv,
                patch as isize,
                1,
                &cols,
                positions as isize,
                1,
                if bias.is_some() { T::one() } else { T::zero() },
                yn,
                positions as isize,
                1,
            );
        }
        let rg = self.needs(&[Some(x), Some(w), b]);
        let shape = vec![geom.batch, geom.out_c, geom.out_h(), geom.out_w()];
        Ok(self.push(shape, y, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// Masked dense layer: `W` holds only the entries listed in `pattern`
    /// (every other entry is structurally zero).
    pub fn sparse_linear(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        pattern: Arc<SparsePattern>,
    ) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 2 || xs[1] != pattern.cols || self.shape(w) != [pattern.nnz()] {
            return Err(shape_err("sparse_linear", xs, &[pattern.rows, pattern.cols]));
        }
        if let Some(b) = b {
            if self.shape(b) != [pattern.rows] {
                return Err(shape_err("sparse_linear bias", self.shape(b), &[pattern.rows]));
            }
        }
        let batch = xs[0];
        let mut xt = vec![T::zero(); batch * pattern.cols];
        transpose(self.value(x), batch, pattern.cols, &mut xt);
        let mut yt = vec![T::zero(); pattern.rows * batch];
        if let Some(b) = b {
            for (row, &bias) in yt.chunks_exact_mut(batch).zip(self.value(b)) {
                row.fill(bias);
            }
        }
        let wv = self.value(w);
        for ((&r, &c), &wv) in pattern.row_idx.iter().zip(&pattern.col_idx).zip(wv) {
            let src = &xt[c as usize * batch..(c as usize + 1) * batch];
            let dst = &mut yt[r as usize * batch..(r as usize + 1) * batch];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += wv * s;
            }
        }
        let mut y = vec![T::zero(); batch * pattern.rows];
        transpose(&yt, pattern.rows, batch, &mut y);
        let rg = self.needs(&[Some(x), Some(w), b]);
        let rows = pattern.rows;
        Ok(self.push(vec![batch, rows], y, Op::SparseLinear { x, w, b, pattern }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).iter().map(|&v| v.max(T::zero())).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.node(x).requires_grad;
        self.push(shape, y, Op::Relu(x), rg)
    }

    /// 2×2 max pooling with stride 2 over `[batch, c, h, w]`.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || xs[2] < 2 || xs[3] < 2 {
            return Err(shape_err("max_pool2", &xs, &[2, 2]));
        }
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let (oh, ow) = (h / 2, w / 2);
        let xv = self.value(x);
        let mut y = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    y.push(xv[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let rg = self.node(x).requires_grad;
        Ok(self.push(vec![xs[0], xs[1], oh, ow], y, Op::MaxPool2 { x, argmax }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(shape_err("reshape", self.shape(x), &shape));
        }
        let y = self.value(x).to_vec();
        let rg = self.node(x).requires_grad;
        Ok(self.push(shape, y, Op::Reshape(x), rg))
    }

    /// `[batch, ...] -> [batch, rest]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x);
        let batch = *xs.first().ok_or_else(|| shape_err("flatten", xs, &[]))?;
        let rest = xs[1..].iter().product();
        self.reshape(x, vec![batch, rest])
    }

    /// `[batch, c, h, w] -> [batch, c]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(shape_err("global_avg_pool", &xs, &[]));
        }
        let area = xs[2] * xs[3];
        let y = self
            .value(x)
            .chunks_exact(area)
            .map(|plane| T::from_f64(plane.iter().map(|v| v.as_f64()).sum::<f64>() / area as f64))
            .collect();
        let rg = self.node(x).requires_grad;
        Ok(self.push(vec![xs[0], xs[1]], y, Op::GlobalAvgPool(x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let y = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&p, &q)| p + q)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[Some(a), Some(b)]);
        Ok(self.push(shape, y, Op::Add(a, b), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = T::from_f64(self.value(x).iter().map(|v| v.as_f64()).sum());
        let rg = self.node(x).requires_grad;
        self.push(vec![1], vec![total], Op::Sum(x), rg)
    }

    /// Mean softmax cross-entropy over the batch; `logits: [batch, classes]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let ls = self.shape(logits);
        if ls.len() != 2 || ls[0] != targets.len() || ls[0] == 0 {
            return Err(shape_err("cross_entropy", ls, &[targets.len()]));
        }
        let classes = ls[1];
        if let Some(&label) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::ClassOutOfRange { label, classes });
        }
        let lv = self.value(logits);
        let mut probs = Vec::with_capacity(lv.len());
        let mut total = 0.0f64;
        for (row, &t) in lv.chunks_exact(classes).zip(targets) {
            let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            total += z.ln() + max - row[t].as_f64();
            probs.extend(exps.iter().map(|e| T::from_f64(e / z)));
        }
        let loss = T::from_f64(total / targets.len() as f64);
        let rg = self.node(logits).requires_grad;
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.push(vec![1], vec![loss], op, rg))
    }

    /// Mean squared error over every element.
    pub fn mse(&mut self, pred: Var, target: &[T]) -> Result<Var> {
        let pv = self.value(pred);
        if pv.len() != target.len() || pv.is_empty() {
            return Err(shape_err("mse", self.shape(pred), &[target.len()]));
        }
        let total: f64 = pv
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let d = p.as_f64() - t.as_f64();
                d * d
            })
            .sum();
        let loss = T::from_f64(total / pv.len() as f64);
        let rg = self.node(pred).requires_grad;
        let op = Op::Mse {
            pred,
            target: target.to_vec(),
        };
        Ok(self.push(vec![1], vec![loss], op, rg))
    }

    /// Propagates gradients from `loss` (seeded with ones) to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if !self.node(loss).requires_grad {
            return Err(Error::Detached);
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one(); self.value(loss).len()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let slots = self
            .nodes
            .iter()
            .map(|n| match n.op {
                Op::Param(slot) => Some(slot),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, slots })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, contribution: impl FnOnce(&mut [T])) {
        if !self.node(v).requires_grad {
            return;
        }
        let len = self.value(v).len();
        let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
        contribution(buf);
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (batch, inp) = (self.shape(*x)[0], self.shape(*x)[1]);
                let out = self.shape(*w)[0];
                self.accumulate(grads, *w, |gw| {
                    T::gemm(
                        out,
                        batch,
                        inp,
                        T::one(),
                        g,
                        1,
                        out as isize,
                        self.value(*x),
                        inp as isize,
                        1,
                        T::one(),
                        gw,
                        inp as isize,
                        1,
                    )
                });
                if let Some(b) = b {
                    self.accumulate(grads, *b, |gb| {
                        for (o, slot) in gb.iter_mut().enumerate() {
                            let s: f64 = (0..batch).map(|n| g[n * out + o].as_f64()).sum();
                            *slot += T::from_f64(s);
                        }
                    });
                }
                self.accumulate(grads, *x, |gx| {
                    T::gemm(
                        batch,
                        out,
                        inp,
                        T::one(),
                        g,
                        out as isize,
                        1,
                        self.value(*w),
                        inp as isize,
                        1,
                        T::one(),
                        gx,
                        inp as isize,
                        1,
                    )
                });
            }
            Op::Conv2d { x, w, b, geom } => self.backprop_conv(g, *x, *w, *b, geom, grads),
            Op::SparseLinear { x, w, b, pattern } => {
                let batch = self.shape(*x)[0];
                let mut gt = vec![T::zero(); pattern.rows * batch];
                transpose(g, batch, pattern.rows, &mut gt);
                let row = |r: u32| &gt[r as usize * batch..(r as usize + 1) * batch];
                if self.node(*w).requires_grad {
                    let mut xt = vec![T::zero(); batch * pattern.cols];
                    transpose(self.value(*x), batch, pattern.cols, &mut xt);
                    self.accumulate(grads, *w, |gw| {
                        for ((&r, &c), slot) in pattern.row_idx.iter().zip(&pattern.col_idx).zip(gw) {
                            let xs = &xt[c as usize * batch..(c as usize + 1) * batch];
                            *slot += row(r).iter().zip(xs).map(|(&p, &q)| p * q).sum();
                        }
                    });
                }
                if let Some(b) = b {
                    self.accumulate(grads, *b, |gb| {
                        for (r, slot) in gb.iter_mut().enumerate() {
                            *slot += T::from_f64(row(r as u32).iter().map(|v| v.as_f64()).sum());
                        }
                    });
                }
                if self.node(*x).requires_grad {
                    let mut gxt = vec![T::zero(); pattern.cols * batch];
                    let wv = self.value(*w);
                    for ((&r, &c), &wv) in pattern.row_idx.iter().zip(&pattern.col_idx).zip(wv) {
                        let dst = &mut gxt[c as usize * batch..(c as usize + 1) * batch];
                        for (d, &s) in dst.iter_mut().zip(row(r)) {
                            *d += wv * s;
                        }
                    }
                    self.accumulate(grads, *x, |gx| {
                        for c in 0..pattern.cols {
                            for n in 0..batch {
                                gx[n * pattern.cols + c] += gxt[c * batch + n];
                            }
                        }
                    });
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                self.accumulate(grads, *x, |gx| {
                    for ((slot, &gi), &xi) in gx.iter_mut().zip(g).zip(xv) {
                        if xi > T::zero() {
                            *slot += gi;
                        }
                    }
                });
            }
            Op::MaxPool2 { x, argmax } => self.accumulate(grads, *x, |gx| {
                for (&idx, &gi) in argmax.iter().zip(g) {
                    gx[idx as usize] += gi;
                }
            }),
            Op::Reshape(x) => self.accumulate(grads, *x, |gx| {
                for (slot, &gi) in gx.iter_mut().zip(g) {
                    *slot += gi;
                }
            }),
            Op::GlobalAvgPool(x) => {
                let xs = self.shape(*x);
                let area = xs[2] * xs[3];
                let scale = T::from_f64(1.0 / area as f64);
                self.accumulate(grads, *x, |gx| {
                    for (plane, &gi) in gx.chunks_exact_mut(area).zip(g) {
                        for slot in plane {
                            *slot += gi * scale;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    self.accumulate(grads, *v, |gv| {
                        for (slot, &gi) in gv.iter_mut().zip(g) {
                            *slot += gi;
                        }
                    });
                }
            }
            Op::Sum(x) => self.accumulate(grads, *x, |gx| {
                for slot in gx {
                    *slot += g[0];
                }
            }),
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let classes = self.shape(*logits)[1];
                let scale = g[0] / T::from_f64(targets.len() as f64);
                self.accumulate(grads, *logits, |gl| {
                    for (n, &t) in targets.iter().enumerate() {
                        for k in 0..classes {
                            let onehot = if k == t { T::one() } else { T::zero() };
                            gl[n * classes + k] += (probs[n * classes + k] - onehot) * scale;
                        }
                    }
                });
            }
            Op::Mse { pred, target } => {
                let pv = self.value(*pred);
                let scale = g[0] * T::from_f64(2.0 / pv.len() as f64);
                self.accumulate(grads, *pred, |gp| {
                    for ((slot, &p), &t) in gp.iter_mut().zip(pv).zip(target) {
                        *slot += (p - t) * scale;
                    }
                });
            }
        }
    }

    fn backprop_conv(
        &self,
        g: &[T],
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: &ConvGeom,
        grads: &mut [Option<Vec<T>>],
    ) {
        let (positions, patch) = (geom.out_positions(), geom.patch_len());
        let in_len = geom.in_c * geom.h * geom.w;
        let out_len = geom.out_c * positions;
        let (xv, wv) = (self.value(x), self.value(w));
        let need_w = self.node(w).requires_grad;
        let need_x = self.node(x).requires_grad;
        let mut cols = vec![T::zero(); patch * positions];
        if need_w {
            self.accumulate(grads, w, |gw| {
                for n in 0..geom.batch {
                    im2col(geom, &xv[n * in_len..(n + 1) * in_len], &mut cols);
                    T::gemm(
                        geom.out_c,
                        positions,
                        patch,
                        T::one(),
                        &g[n * out_len..(n + 1) * out_len],
                        positions as isize,
                        1,
                        &cols,
                        1,
                        positions as isize,
                        T::one(),
                        gw,
                        patch as isize,
                        1,
                    );
                }
            });
        }
        if let Some(b) = b {
            self.accumulate(grads, b, |gb| {
                for n in 0..geom.batch {
                    let gn = &g[n * out_len..(n + 1) * out_len];
                    for (slot, plane) in gb.iter_mut().zip(gn.chunks_exact(positions)) {
                        *slot += T::from_f64(plane.iter().map(|v| v.as_f64()).sum());
                    }
                }
            });
        }
        if need_x {
            self.accumulate(grads, x, |gx| {
                for n in 0..geom.batch {
                    T::gemm(
                        patch,
                        geom.out_c,
                        positions,
                        T::one(),
                        wv,
                        1,
                        patch as isize,
                        &g[n * out_len..(n + 1) * out_len],
                        positions as isize,
                        1,
                        T::zero(),
                        &mut cols,
                        positions as isize,
                        1,
                    );
                    col2im_add(geom, &cols, &mut gx[n * in_len..(n + 1) * in_len]);
                }
            });
        }
    }
}

/// Gradient of the loss with respect to every node that required one.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    slots: Vec<Option<usize>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0)?.as_deref()
    }

    /// Gradient of the parameter registered under `slot`.
    pub fn param(&self, slot: usize) -> Option<&[T]> {
        self.slots
            .iter()
            .position(|s| *s == Some(slot))
            .and_then(|i| self.grads[i].as_deref())
    }

    /// Moves parameter gradients out, keyed by slot.
    pub fn into_params(self) -> Vec<(usize, Vec<T>)> {
        self.slots
            .into_iter()
            .zip(self.grads)
            .filter_map(|(slot, g)| Some((slot?, g?)))
            .collect()
    }
}
