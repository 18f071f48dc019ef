//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse. Operations are coarse (matrix product, layer norm,
//! multi-head attention, index gathers) so the tape stays short and each
//! backward rule is written out by hand.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gather index that produces a zero (padding).
pub const PAD: usize = usize::MAX;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a matrix view: every dimension but the last.
    pub fn rows(&self) -> usize {
        self.data.len() / self.cols().max(1)
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Gather(Var, Rc<[usize]>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    Attention { q: Var, k: Var, v: Var, groups: usize, heads: usize, probs: Vec<f64> },
    /// Scalar computed outside the tape together with its gradient.
    External { x: Var, grad: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Attention probabilities of one attention call, `[groups, heads, n_q, n_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub groups: usize,
    pub heads: usize,
    pub n_q: usize,
    pub n_k: usize,
    pub probs: Vec<f64>,
}

impl AttentionMap {
    pub fn row(&self, group: usize, head: usize, query: usize) -> &[f64] {
        let start = ((group * self.heads + head) * self.n_q + query) * self.n_k;
        &self.probs[start..start + self.n_k]
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Grads {
    grads: Vec<Vec<f64>>,
}

impl Grads {
    /// Gradient of a variable; `None` when nothing flowed into it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        let g = &self.grads[v.0];
        (!g.is_empty()).then_some(g.as_slice())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        let g = std::mem::take(&mut self.grads[v.0]);
        (!g.is_empty()).then_some(g)
    }
}

fn gelu(x: f64) -> (f64, f64) {
    const K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    let u = K * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let du = K * (1.0 + 3.0 * 0.044715 * x * x);
    (y, 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c = alpha * a·b + beta * c` with explicit strides (row, col) for each operand.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize), c: &mut [f64], beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: strides and extents describe regions inside the given slices;
    // every caller passes buffers of at least m*k, k*n and m*n elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// Reinterprets a variable's data under another shape (same length).
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let n = self.value(x).len();
        assert_eq!(n, shape.iter().product::<usize>(), "reshape changes element count");
        let idx = cached(Layout::Identity(n), || (0..n).collect());
        self.gather(x, idx, shape)
    }

    /// `[m,k] · [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        assert_eq!(tb.rows(), k, "matmul inner dimensions {:?} x {:?}", ta.shape, tb.shape);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &ta.data, (k, 1), &tb.data, (n, 1), &mut out, 0.0);
        let mut shape = ta.shape.clone();
        *shape.last_mut().unwrap() = n;
        self.push(Tensor { shape, data: out }, Op::MatMul(a, b))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.data.len(), tb.data.len(), "elementwise shapes {:?} vs {:?}", ta.shape, tb.shape);
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| f(*x, *y)).collect();
        let shape = ta.shape.clone();
        self.push(Tensor { shape, data }, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`n` row vector to every row of `[m,n]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        let n = ta.cols();
        assert_eq!(tr.len(), n, "row vector length");
        let data = ta.data.iter().enumerate().map(|(i, x)| x + tr.data[i % n]).collect();
        let shape = ta.shape.clone();
        self.push(Tensor { shape, data }, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a);
        let data = t.data.iter().map(|x| x * s).collect();
        let shape = t.shape.clone();
        self.push(Tensor { shape, data }, Op::Scale(a, s))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let data = t.data.iter().map(|x| f(*x)).collect();
        let shape = t.shape.clone();
        self.push(Tensor { shape, data }, op)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.map(a, |x| gelu(x).0, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    /// Normalizes each row of `[m,n]`, then applies `gamma`, `beta` (length `n`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let t = self.value(x);
        let (m, n) = (t.rows(), t.cols());
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        assert!(g.len() == n && b.len() == n, "layer norm parameter length");
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &t.data[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..n {
                let h = (row[c] - mean) * is;
                xhat[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        let shape = t.shape.clone();
        self.push(Tensor { shape, data: out }, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// `out[i] = x[idx[i]]`, or 0 where `idx[i] == PAD`.
    pub fn gather(&mut self, x: Var, idx: Rc<[usize]>, shape: &[usize]) -> Var {
        assert_eq!(idx.len(), shape.iter().product::<usize>(), "gather shape");
        let src = &self.value(x).data;
        let data = idx.iter().map(|&i| if i == PAD { 0.0 } else { src[i] }).collect();
        self.push(Tensor { shape: shape.to_vec(), data }, Op::Gather(x, idx))
    }

    /// Concatenates `[m, n_i]` matrices along columns.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Var {
        let m = self.value(xs[0]).rows();
        let widths: Vec<usize> = xs.iter().map(|&x| self.value(x).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for (&x, &w) in xs.iter().zip(&widths) {
                let t = self.value(x);
                assert_eq!(t.rows(), m, "concat_cols row mismatch");
                data.extend_from_slice(&t.data[r * w..(r + 1) * w]);
            }
        }
        self.push(Tensor { shape: vec![m, total], data }, Op::ConcatCols(xs.to_vec()))
    }

    /// Stacks `[m_i, n]` matrices along rows.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Var {
        let n = self.value(xs[0]).cols();
        let mut data = Vec::new();
        for &x in xs {
            let t = self.value(x);
            assert_eq!(t.cols(), n, "concat_rows column mismatch");
            data.extend_from_slice(&t.data);
        }
        let m = data.len() / n;
        self.push(Tensor { shape: vec![m, n], data }, Op::ConcatRows(xs.to_vec()))
    }

    /// Column means of `[m,n]` as `[1,n]`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (m, n) = (t.rows(), t.cols());
        let mut data = vec![0.0; n];
        for r in 0..m {
            for c in 0..n {
                data[c] += t.data[r * n + c];
            }
        }
        for v in &mut data {
            *v /= m as f64;
        }
        self.push(Tensor { shape: vec![1, n], data }, Op::MeanRows(x))
    }

    /// Scaled dot-product attention, split into `heads` column blocks and
    /// `groups` independent row blocks (queries and keys both split evenly).
    pub fn attention(&mut self, q: Var, k: Var, v: Var, groups: usize, heads: usize) -> Var {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.cols();
        assert!(tk.cols() == d && tv.cols() == d && tk.rows() == tv.rows(), "attention operand shapes");
        assert!(d % heads == 0 && tq.rows() % groups == 0 && tk.rows() % groups == 0, "attention split");
        let (nq, nk, dh) = (tq.rows() / groups, tk.rows() / groups, d / heads);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; groups * heads * nq * nk];
        let mut out = vec![0.0; tq.rows() * d];
        for g in 0..groups {
            for h in 0..heads {
                for i in 0..nq {
                    let qi = &tq.data[(g * nq + i) * d + h * dh..][..dh];
                    let p = &mut probs[((g * heads + h) * nq + i) * nk..][..nk];
                    let mut max = f64::NEG_INFINITY;
                    for (j, pj) in p.iter_mut().enumerate() {
                        let kj = &tk.data[(g * nk + j) * d + h * dh..][..dh];
                        *pj = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                        max = max.max(*pj);
                    }
                    let mut z = 0.0;
                    for pj in p.iter_mut() {
                        *pj = (*pj - max).exp();
                        z += *pj;
                    }
                    let o = &mut out[(g * nq + i) * d + h * dh..][..dh];
                    for (j, pj) in p.iter_mut().enumerate() {
                        *pj /= z;
                        let vj = &tv.data[(g * nk + j) * d + h * dh..][..dh];
                        for (oc, vc) in o.iter_mut().zip(vj) {
                            *oc += *pj * vc;
                        }
                    }
                }
            }
        }
        let shape = tq.shape.clone();
        self.push(Tensor { shape, data: out }, Op::Attention { q, k, v, groups, heads, probs })
    }

    /// Attention probabilities recorded by an [`Tape::attention`] call.
    pub fn attention_map(&self, out: Var) -> Option<AttentionMap> {
        match &self.nodes[out.0].op {
            Op::Attention { q, k, groups, heads, probs, .. } => Some(AttentionMap {
                groups: *groups,
                heads: *heads,
                n_q: self.value(*q).rows() / groups,
                n_k: self.value(*k).rows() / groups,
                probs: probs.clone(),
            }),
            _ => None,
        }
    }

    /// Scalar `value` whose gradient with respect to `x` is `grad`.
    pub fn external(&mut self, x: Var, value: f64, grad: Vec<f64>) -> Var {
        assert_eq!(grad.len(), self.value(x).len(), "external gradient length");
        self.push(Tensor::scalar(value), Op::External { x, grad })
    }

    pub fn backward(&self, out: Var) -> Grads {
        let seed = vec![1.0; self.value(out).len()];
        self.backward_with(out, seed)
    }

    /// Reverse pass seeded with `d(objective)/d(out) = seed`.
    pub fn backward_with(&self, out: Var, seed: Vec<f64>) -> Grads {
        assert_eq!(seed.len(), self.value(out).len(), "seed gradient length");
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); out.0 + 1];
        grads[out.0] = seed;
        for i in (0..=out.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            self.propagate(i, &g, &mut grads);
            grads[i] = g;
        }
        grads.resize(self.nodes.len(), Vec::new());
        Grads { grads }
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Vec<f64>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let ga = acc(grads, *a, m * k);
                gemm(m, n, k, g, (n, 1), &tb.data, (1, n), ga, 1.0);
                let gb = acc(grads, *b, k * n);
                gemm(k, m, n, &ta.data, (1, k), g, (n, 1), gb, 1.0);
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, g.len()), g, 1.0);
                add_into(acc(grads, *b, g.len()), g, 1.0);
            }
            Op::Sub(a, b) => {
                add_into(acc(grads, *a, g.len()), g, 1.0);
                add_into(acc(grads, *b, g.len()), g, -1.0);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a).data.clone(), val(*b).data.clone());
                for (x, (gi, y)) in acc(grads, *a, g.len()).iter_mut().zip(g.iter().zip(&tb)) {
                    *x += gi * y;
                }
                for (x, (gi, y)) in acc(grads, *b, g.len()).iter_mut().zip(g.iter().zip(&ta)) {
                    *x += gi * y;
                }
            }
            Op::AddRow(a, row) => {
                add_into(acc(grads, *a, g.len()), g, 1.0);
                let n = val(*row).len();
                let gr = acc(grads, *row, n);
                for (j, gi) in g.iter().enumerate() {
                    gr[j % n] += gi;
                }
            }
            Op::Scale(a, s) => add_into(acc(grads, *a, g.len()), g, *s),
            Op::Gelu(a) => {
                let x = &val(*a).data;
                for (o, (gi, xi)) in acc(grads, *a, g.len()).iter_mut().zip(g.iter().zip(x)) {
                    *o += gi * gelu(*xi).1;
                }
            }
            Op::Sigmoid(a) => {
                for (o, (gi, y)) in acc(grads, *a, g.len()).iter_mut().zip(g.iter().zip(&node.value.data)) {
                    *o += gi * y * (1.0 - y);
                }
            }
            Op::Tanh(a) => {
                for (o, (gi, y)) in acc(grads, *a, g.len()).iter_mut().zip(g.iter().zip(&node.value.data)) {
                    *o += gi * (1.0 - y * y);
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let n = node.value.cols();
                let m = g.len() / n;
                let gam = val(*gamma).data.clone();
                {
                    let gg = acc(grads, *gamma, n);
                    for (j, (gi, h)) in g.iter().zip(xhat).enumerate() {
                        gg[j % n] += gi * h;
                    }
                }
                {
                    let gb = acc(grads, *beta, n);
                    for (j, gi) in g.iter().enumerate() {
                        gb[j % n] += gi;
                    }
                }
                let gx = acc(grads, *x, m * n);
                let mut dxh = vec![0.0; n];
                for r in 0..m {
                    let (mut s1, mut s2) = (0.0, 0.0);
                    for c in 0..n {
                        dxh[c] = g[r * n + c] * gam[c];
                        s1 += dxh[c];
                        s2 += dxh[c] * xhat[r * n + c];
                    }
                    let k = inv_std[r] / n as f64;
                    for c in 0..n {
                        gx[r * n + c] += k * (n as f64 * dxh[c] - s1 - xhat[r * n + c] * s2);
                    }
                }
            }
            Op::Gather(x, idx) => {
                let gx = acc(grads, *x, val(*x).len());
                for (gi, &j) in g.iter().zip(idx.iter()) {
                    if j != PAD {
                        gx[j] += gi;
                    }
                }
            }
            Op::ConcatCols(xs) => {
                let total = node.value.cols();
                let m = node.value.rows();
                let mut off = 0;
                for x in xs {
                    let w = val(*x).cols();
                    let gx = acc(grads, *x, m * w);
                    for r in 0..m {
                        add_into(&mut gx[r * w..(r + 1) * w], &g[r * total + off..r * total + off + w], 1.0);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(xs) => {
                let mut off = 0;
                for x in xs {
                    let len = val(*x).len();
                    add_into(acc(grads, *x, len), &g[off..off + len], 1.0);
                    off += len;
                }
            }
            Op::MeanRows(x) => {
                let t = val(*x);
                let (m, n) = (t.rows(), t.cols());
                let gx = acc(grads, *x, m * n);
                for r in 0..m {
                    for c in 0..n {
                        gx[r * n + c] += g[c] / m as f64;
                    }
                }
            }
            Op::Attention { q, k, v, groups, heads, probs } => {
                let (tq, tk, tv) = (val(*q), val(*k), val(*v));
                let d = tq.cols();
                let (nq, nk, dh) = (tq.rows() / groups, tk.rows() / groups, d / heads);
                let scale = 1.0 / (dh as f64).sqrt();
                let mut gq = vec![0.0; tq.len()];
                let mut gk = vec![0.0; tk.len()];
                let mut gv = vec![0.0; tv.len()];
                let mut ds = vec![0.0; nk];
                for gr in 0..*groups {
                    for h in 0..*heads {
                        for i in 0..nq {
                            let p = &probs[((gr * heads + h) * nq + i) * nk..][..nk];
                            let go = &g[(gr * nq + i) * d + h * dh..][..dh];
                            let mut dot = 0.0;
                            for j in 0..nk {
                                let row = (gr * nk + j) * d + h * dh;
                                let vj = &tv.data[row..row + dh];
                                let dp: f64 = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                                ds[j] = dp;
                                dot += dp * p[j];
                                for (gvc, goc) in gv[row..row + dh].iter_mut().zip(go) {
                                    *gvc += p[j] * goc;
                                }
                            }
                            let qrow = (gr * nq + i) * d + h * dh;
                            for j in 0..nk {
                                let s = p[j] * (ds[j] - dot) * scale;
                                if s == 0.0 {
                                    continue;
                                }
                                let krow = (gr * nk + j) * d + h * dh;
                                for c in 0..dh {
                                    gq[qrow + c] += s * tk.data[krow + c];
                                    gk[krow + c] += s * tq.data[qrow + c];
                                }
                            }
                        }
                    }
                }
                add_into(acc(grads, *q, gq.len()), &gq, 1.0);
                add_into(acc(grads, *k, gk.len()), &gk, 1.0);
                add_into(acc(grads, *v, gv.len()), &gv, 1.0);
            }
            Op::External { x, grad } => add_into(acc(grads, *x, grad.len()), grad, g[0]),
        }
    }
}

fn acc(grads: &mut [Vec<f64>], v: Var, len: usize) -> &mut Vec<f64> {
    let g = &mut grads[v.0];
    if g.is_empty() {
        g.resize(len, 0.0);
    }
    g
}

fn add_into(dst: &mut [f64], src: &[f64], s: f64) {
    for (d, x) in dst.iter_mut().zip(src) {
        *d += s * x;
    }
}

/// Index layouts reused across forward passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Layout {
    Identity(usize),
    Im2col { t: usize, h: usize, w: usize, c: usize },
    PixelShuffle { h: usize, w: usize, c: usize, r: usize },
    Patchify { h: usize, w: usize, c: usize, ph: usize, pw: usize },
    Im2colFrames { n: usize, h: usize, w: usize, c: usize },
    RowSlice { start: usize, len: usize, c: usize },
    Transpose { a: usize, b: usize, c: usize },
    Broadcast { m: usize, n: usize },
}

thread_local! {
    static LAYOUTS: RefCell<HashMap<Layout, Rc<[usize]>>> = RefCell::new(HashMap::new());
}

fn cached(key: Layout, build: impl FnOnce() -> Vec<usize>) -> Rc<[usize]> {
    LAYOUTS.with(|m| {
        if let Some(v) = m.borrow().get(&key) {
            return v.clone();
        }
        let v: Rc<[usize]> = build().into();
        m.borrow_mut().insert(key, v.clone());
        v
    })
}

/// Zero-padded 3×3 neighborhoods of `t` stacked `[h*w, c]` frames as
/// `[h*w, t*9*c]`, columns ordered (frame, ky, kx, channel).
pub fn im2col_3x3(t: usize, h: usize, w: usize, c: usize) -> Rc<[usize]> {
    cached(Layout::Im2col { t, h, w, c }, || {
        let mut idx = Vec::with_capacity(h * w * t * 9 * c);
        for y in 0..h as isize {
            for x in 0..w as isize {
                for f in 0..t {
                    for dy in -1..=1isize {
                        for dx in -1..=1isize {
                            let (yy, xx) = (y + dy, x + dx);
                            let inside = yy >= 0 && xx >= 0 && yy < h as isize && xx < w as isize;
                            for ch in 0..c {
                                idx.push(if inside {
                                    ((f * h + yy as usize) * w + xx as usize) * c + ch
                                } else {
                                    PAD
                                });
                            }
                        }
                    }
                }
            }
        }
        idx
    })
}

/// Depth-to-space: `[h*w, c*r*r]` to `[(h*r)*(w*r), c]`.
pub fn pixel_shuffle(h: usize, w: usize, c: usize, r: usize) -> Rc<[usize]> {
    cached(Layout::PixelShuffle { h, w, c, r }, || {
        let (oh, ow) = (h * r, w * r);
        let mut idx = Vec::with_capacity(oh * ow * c);
        for y in 0..oh {
            for x in 0..ow {
                let src = (y / r) * w + x / r;
                for ch in 0..c {
                    idx.push(src * c * r * r + ch * r * r + (y % r) * r + x % r);
                }
            }
        }
        idx
    })
}

/// Non-overlapping `ph×pw` patches of `[h*w, c]` as
/// `[(h/ph)*(w/pw), ph*pw*c]`.
pub fn patchify(h: usize, w: usize, c: usize, ph: usize, pw: usize) -> Rc<[usize]> {
    cached(Layout::Patchify { h, w, c, ph, pw }, || {
        let mut idx = Vec::with_capacity(h * w * c);
        for py in 0..h / ph {
            for px in 0..w / pw {
                for dy in 0..ph {
                    for dx in 0..pw {
                        for ch in 0..c {
                            idx.push(((py * ph + dy) * w + px * pw + dx) * c + ch);
                        }
                    }
                }
            }
        }
        idx
    })
}

/// Zero-padded 3×3 neighborhoods computed separately for each of `n`
/// stacked `[h*w, c]` frames, giving `[n*h*w, 9*c]`.
pub fn im2col_3x3_frames(n: usize, h: usize, w: usize, c: usize) -> Rc<[usize]> {
    cached(Layout::Im2colFrames { n, h, w, c }, || {
        let single = im2col_3x3(1, h, w, c);
        let frame = h * w * c;
        (0..n).flat_map(|f| single.iter().map(move |&i| if i == PAD { PAD } else { i + f * frame })).collect()
    })
}

/// Rows `[start, start+len)` of a matrix with `c` columns.
pub fn row_slice(start: usize, len: usize, c: usize) -> Rc<[usize]> {
    cached(Layout::RowSlice { start, len, c }, || (start * c..(start + len) * c).collect())
}

/// Swaps the two outer axes of `[a, b, c]` giving `[b, a, c]`.
pub fn transpose_outer(a: usize, b: usize, c: usize) -> Rc<[usize]> {
    cached(Layout::Transpose { a, b, c }, || {
        let mut idx = Vec::with_capacity(a * b * c);
        for j in 0..b {
            for i in 0..a {
                for k in 0..c {
                    idx.push((i * b + j) * c + k);
                }
            }
        }
        idx
    })
}

/// Repeats a block of `n` values `m` times (a `[1, n]` row, or a whole matrix).
pub fn broadcast_rows(m: usize, n: usize) -> Rc<[usize]> {
    cached(Layout::Broadcast { m, n }, || (0..m * n).map(|i| i % n).collect())
}

/// 2×2 max pooling of `[h*w, c]`; indices follow the first maximum.
pub fn max_pool2(tape: &mut Tape, x: Var, h: usize, w: usize) -> Var {
    let t = tape.value(x);
    let c = t.cols();
    let (oh, ow) = (h / 2, w / 2);
    let mut idx = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for xx in 0..ow {
            for ch in 0..c {
                let mut best = ((2 * y) * w + 2 * xx) * c + ch;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let j = ((2 * y + dy) * w + 2 * xx + dx) * c + ch;
                    if t.data[j] > t.data[best] {
                        best = j;
                    }
                }
                idx.push(best);
            }
        }
    }
    tape.gather(x, idx.into(), &[oh * ow, c])
}

/// Central-difference check of every input's gradient, Richardson-extrapolated
/// from steps `step` and `step / 2`.
///
/// The output is reduced to a scalar by a fixed random projection so all
/// gradient entries are of comparable size. Returns the largest relative
/// error `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(inputs: &[Tensor], step: f64, f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let run = |xs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars);
        (tape, vars, out)
    };
    let (tape, vars, out) = run(inputs);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let proj: Vec<f64> = (0..tape.value(out).len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |xs: &[Tensor]| {
        let (t, _, o) = run(xs);
        t.value(o).data.iter().zip(&proj).map(|(a, b)| a * b).sum::<f64>()
    };
    let grads = tape.backward_with(out, proj.clone());
    let mut worst = 0.0f64;
    let mut xs = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for j in 0..inputs[i].len() {
            let orig = xs[i].data[j];
            let mut central = |h: f64| {
                xs[i].data[j] = orig + h;
                let up = objective(&xs);
                xs[i].data[j] = orig - h;
                let down = objective(&xs);
                xs[i].data[j] = orig;
                (up - down) / (2.0 * h)
            };
            // Richardson extrapolation cancels the h^2 term, so the step can
            // stay large enough to keep round-off away from tiny gradients
            let numeric = (4.0 * central(step / 2.0) - central(step)) / 3.0;
            let a = analytic[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

/// Deterministic random tensor for tests and checks.
pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor { shape: shape.to_vec(), data: (0..n).map(|_| rng.random_range(-scale..scale)).collect() }
}
