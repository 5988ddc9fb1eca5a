//! Tape of recorded operations and their reverse-mode adjoints.

use crate::error::{NeuralError, Result};
use crate::linalg::{gemm, Mat};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    batch: usize,
    c_in: usize,
    len: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    len_out: usize,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Square(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Dense {
        x: Var,
        w: Var,
        b: Var,
        batch: usize,
        n_in: usize,
        n_out: usize,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    GlobalAvgPool {
        x: Var,
        len: usize,
    },
    SoftmaxCe {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
        n_classes: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation so gradients can be replayed backwards.
///
/// Parameters are copied in with [`Graph::param`]; after [`Graph::backward`]
/// their gradients are pushed back with [`Graph::accumulate_param_grads`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NeuralError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn add_into(dst: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = dst.get_or_insert_with(|| vec![0.0; len]);
    f(buf);
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input. Gradients are tracked only when `t.requires_grad()`.
    pub fn input(&mut self, t: Tensor) -> Var {
        let needs = t.requires_grad();
        self.push(t, Op::Input, needs)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let mut t = store.get(id).clone();
        t.clear_grad();
        let needs = t.requires_grad();
        self.push(t, Op::Param(id), needs)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = &self.nodes[a.0].value;
        let data = src.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(a);
        self.push(t, op, needs)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        same_shape(name, ta, tb)?;
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    /// Skip connection `x + f(x)`; identical to [`Graph::add`].
    pub fn residual_add(&mut self, x: Var, fx: Var) -> Result<Var> {
        self.add(x, fx)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Logistic squashing into (0, 1).
    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    /// `x` for `x >= 0`, `alpha * x` otherwise.
    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Result<Var> {
        if !(alpha > 0.0) {
            return Err(NeuralError::InvalidArgument(format!(
                "leaky_relu slope must be positive, got {alpha}"
            )));
        }
        Ok(self.unary(a, Op::LeakyRelu(a, alpha), |x| {
            if x >= 0.0 {
                x
            } else {
                alpha * x
            }
        }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data().iter().sum();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0].value;
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Mean(a), needs)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.nodes[a.0].value.reshape(shape)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Reshape(a), needs))
    }

    /// Affine map `W x + b` for `x` of shape `[N]` or a batch `[B, N]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        if tw.shape().len() != 2 {
            return Err(NeuralError::ShapeMismatch {
                op: "dense weights",
                left: tw.shape().to_vec(),
                right: vec![],
            });
        }
        let (n_out, n_in) = (tw.shape()[0], tw.shape()[1]);
        let (batch, out_shape) = match tx.shape() {
            [n] if *n == n_in => (1, vec![n_out]),
            [bsz, n] if *n == n_in => (*bsz, vec![*bsz, n_out]),
            _ => {
                return Err(NeuralError::ShapeMismatch {
                    op: "dense",
                    left: tx.shape().to_vec(),
                    right: tw.shape().to_vec(),
                })
            }
        };
        if tb.shape() != [n_out] {
            return Err(NeuralError::ShapeMismatch {
                op: "dense bias",
                left: tb.shape().to_vec(),
                right: vec![n_out],
            });
        }
        let mut out = Vec::with_capacity(batch * n_out);
        for _ in 0..batch {
            out.extend_from_slice(tb.data());
        }
        gemm(
            Mat::row_major(tx.data(), batch, n_in),
            Mat::transposed(tw.data(), n_out, n_in),
            &mut out,
            1.0,
        );
        let t = Tensor::new(out_shape, out)?;
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(
            t,
            Op::Dense {
                x,
                w,
                b,
                batch,
                n_in,
                n_out,
            },
            needs,
        ))
    }

    /// 1-D cross-correlation over `[C_in, L]` or a batch `[B, C_in, L]`
    /// with kernels `[C_out, C_in, K]` and bias `[C_out]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (tx, tw, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        let mismatch = || NeuralError::ShapeMismatch {
            op: "conv1d",
            left: tx.shape().to_vec(),
            right: tw.shape().to_vec(),
        };
        let (batch, c_in, len, batched) = match tx.shape() {
            [c, l] => (1, *c, *l, false),
            [bsz, c, l] => (*bsz, *c, *l, true),
            _ => return Err(mismatch()),
        };
        let [c_out, wc_in, k] = tw.shape() else {
            return Err(mismatch());
        };
        let (c_out, k) = (*c_out, *k);
        if *wc_in != c_in {
            return Err(mismatch());
        }
        if tb.shape() != [c_out] {
            return Err(NeuralError::ShapeMismatch {
                op: "conv1d bias",
                left: tb.shape().to_vec(),
                right: vec![c_out],
            });
        }
        if stride == 0 {
            return Err(NeuralError::InvalidArgument("conv1d stride must be >= 1".into()));
        }
        if len + 2 * padding < k {
            return Err(NeuralError::InvalidArgument(format!(
                "conv1d kernel {k} longer than padded input {}",
                len + 2 * padding
            )));
        }
        let len_out = (len + 2 * padding - k) / stride + 1;
        let geom = ConvGeom {
            batch,
            c_in,
            len,
            c_out,
            k,
            stride,
            padding,
            len_out,
        };
        let ck = c_in * k;
        let mut cols = vec![0.0; batch * ck * len_out];
        let mut out = vec![0.0; batch * c_out * len_out];
        let xd = tx.data();
        for bi in 0..batch {
            let col = &mut cols[bi * ck * len_out..(bi + 1) * ck * len_out];
            im2col(&xd[bi * c_in * len..(bi + 1) * c_in * len], &geom, col);
            let o = &mut out[bi * c_out * len_out..(bi + 1) * c_out * len_out];
            for (co, row) in o.chunks_mut(len_out).enumerate() {
                row.iter_mut().for_each(|v| *v = tb.data()[co]);
            }
            gemm(
                Mat::row_major(tw.data(), c_out, ck),
                Mat::row_major(col, ck, len_out),
                o,
                1.0,
            );
        }
        let shape = if batched {
            vec![batch, c_out, len_out]
        } else {
            vec![c_out, len_out]
        };
        let t = Tensor::new(shape, out)?;
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(t, Op::Conv1d { x, w, b, geom, cols }, needs))
    }

    /// Mean over the trailing length axis: `[C, L] -> [C]`, `[B, C, L] -> [B, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let shape = t.shape();
        if shape.len() < 2 {
            return Err(NeuralError::ShapeMismatch {
                op: "global_avg_pool",
                left: shape.to_vec(),
                right: vec![],
            });
        }
        let len = *shape.last().expect("rank >= 2");
        let out_shape = shape[..shape.len() - 1].to_vec();
        let data = t
            .data()
            .chunks(len)
            .map(|c| c.iter().sum::<f64>() / len as f64)
            .collect();
        let t = Tensor::new(out_shape, data)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::GlobalAvgPool { x, len }, needs))
    }

    /// Mean negative log-likelihood of `targets` under softmax of `logits`
    /// (`[C]` with one target, or `[B, C]` with `B` targets).
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = &self.nodes[logits.0].value;
        let (batch, n_classes) = match t.shape() {
            [c] => (1, *c),
            [b, c] => (*b, *c),
            s => {
                return Err(NeuralError::ShapeMismatch {
                    op: "softmax_cross_entropy",
                    left: s.to_vec(),
                    right: vec![targets.len()],
                })
            }
        };
        if targets.len() != batch {
            return Err(NeuralError::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: t.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        if let Some(&class) = targets.iter().find(|&&c| c >= n_classes) {
            return Err(NeuralError::ClassOutOfRange { class, n_classes });
        }
        let mut probs = Vec::with_capacity(batch * n_classes);
        let mut loss = 0.0;
        for (row, &y) in t.data().chunks(n_classes).zip(targets) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss / batch as f64),
            Op::SoftmaxCe {
                logits,
                targets: targets.to_vec(),
                probs,
                n_classes,
            },
            needs,
        ))
    }

    /// Reverse pass from a single-element output.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let out = &self.nodes[output.0].value;
        if out.len() != 1 {
            return Err(NeuralError::NonScalarOutput(out.shape().to_vec()));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[output.0] = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].needs_grad {
                self.propagate(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        let val = |v: Var| &nodes[v.0].value;
        let wants = |v: Var| nodes[v.0].needs_grad;
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            if wants(v) {
                add_into(&mut grads[v.0], nodes[v.0].value.len(), |buf| f(buf));
            }
        };
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Add(a, b) => {
                acc(*a, &|d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &|d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &|d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &|d| d.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a).data(), val(*b).data());
                acc(*a, &|d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * vb[j];
                    }
                });
                acc(*b, &|d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * va[j];
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &|d| d.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)),
            Op::AddScalar(a) | Op::Reshape(a) => {
                acc(*a, &|d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y))
            }
            Op::Exp(a) => {
                let out = node.value.data();
                acc(*a, &|d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * out[j];
                    }
                });
            }
            Op::Square(a) => {
                let va = val(*a).data();
                acc(*a, &|d| {
                    for j in 0..d.len() {
                        d[j] += 2.0 * va[j] * g[j];
                    }
                });
            }
            Op::Sigmoid(a) => {
                let out = node.value.data();
                acc(*a, &|d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * out[j] * (1.0 - out[j]);
                    }
                });
            }
            Op::LeakyRelu(a, alpha) => {
                let va = val(*a).data();
                acc(*a, &|d| {
                    for j in 0..d.len() {
                        d[j] += if va[j] >= 0.0 { g[j] } else { alpha * g[j] };
                    }
                });
            }
            Op::Sum(a) => acc(*a, &|d| d.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                acc(*a, &|d| d.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::Dense {
                x,
                w,
                b,
                batch,
                n_in,
                n_out,
            } => {
                let (batch, n_in, n_out) = (*batch, *n_in, *n_out);
                let (xd, wd) = (val(*x).data(), val(*w).data());
                acc(*x, &|d| {
                    gemm(
                        Mat::row_major(g, batch, n_out),
                        Mat::row_major(wd, n_out, n_in),
                        d,
                        1.0,
                    )
                });
                acc(*w, &|d| {
                    gemm(
                        Mat::transposed(g, batch, n_out),
                        Mat::row_major(xd, batch, n_in),
                        d,
                        1.0,
                    )
                });
                acc(*b, &|d| {
                    for row in g.chunks(n_out) {
                        d.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Conv1d {
                x,
                w,
                b,
                geom,
                cols,
            } => {
                let geom = *geom;
                let ck = geom.c_in * geom.k;
                let lo = geom.len_out;
                let wd = val(*w).data();
                acc(*b, &|d| {
                    for (j, row) in g.chunks(lo).enumerate() {
                        d[j % geom.c_out] += row.iter().sum::<f64>();
                    }
                });
                acc(*w, &|d| {
                    for bi in 0..geom.batch {
                        gemm(
                            Mat::row_major(&g[bi * geom.c_out * lo..], geom.c_out, lo),
                            Mat::transposed(&cols[bi * ck * lo..], ck, lo),
                            d,
                            1.0,
                        );
                    }
                });
                acc(*x, &|d| {
                    let mut dcols = vec![0.0; ck * lo];
                    for bi in 0..geom.batch {
                        gemm(
                            Mat::transposed(wd, geom.c_out, ck),
                            Mat::row_major(&g[bi * geom.c_out * lo..], geom.c_out, lo),
                            &mut dcols,
                            0.0,
                        );
                        col2im(
                            &dcols,
                            &geom,
                            &mut d[bi * geom.c_in * geom.len..(bi + 1) * geom.c_in * geom.len],
                        );
                    }
                });
            }
            Op::GlobalAvgPool { x, len } => {
                let len = *len;
                acc(*x, &|d| {
                    for (chunk, &gv) in d.chunks_mut(len).zip(g) {
                        chunk.iter_mut().for_each(|v| *v += gv / len as f64);
                    }
                });
            }
            Op::SoftmaxCe {
                logits,
                targets,
                probs,
                n_classes,
            } => {
                let scale = g[0] / targets.len() as f64;
                acc(*logits, &|d| {
                    for (bi, &y) in targets.iter().enumerate() {
                        for c in 0..*n_classes {
                            let j = bi * n_classes + c;
                            let onehot = if c == y { 1.0 } else { 0.0 };
                            d[j] += scale * (probs[j] - onehot);
                        }
                    }
                });
            }
        }
    }

    /// Adds every parameter node's gradient into the matching store tensor.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) -> Result<()> {
        for (node, grad) in self.nodes.iter().zip(&self.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, grad) {
                store.get_mut(*id).accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

fn im2col(x: &[f64], geom: &ConvGeom, cols: &mut [f64]) {
    let lo = geom.len_out;
    for ci in 0..geom.c_in {
        let xrow = &x[ci * geom.len..(ci + 1) * geom.len];
        for kk in 0..geom.k {
            let row = &mut cols[(ci * geom.k + kk) * lo..(ci * geom.k + kk + 1) * lo];
            for (t, slot) in row.iter_mut().enumerate() {
                let pos = (t * geom.stride + kk) as isize - geom.padding as isize;
                *slot = if pos >= 0 && (pos as usize) < geom.len {
                    xrow[pos as usize]
                } else {
                    0.0
                };
            }
        }
    }
}

fn col2im(cols: &[f64], geom: &ConvGeom, dx: &mut [f64]) {
    let lo = geom.len_out;
    for ci in 0..geom.c_in {
        for kk in 0..geom.k {
            let row = &cols[(ci * geom.k + kk) * lo..(ci * geom.k + kk + 1) * lo];
            for (t, &v) in row.iter().enumerate() {
                let pos = (t * geom.stride + kk) as isize - geom.padding as isize;
                if pos >= 0 && (pos as usize) < geom.len {
                    dx[ci * geom.len + pos as usize] += v;
                }
            }
        }
    }
}
