//! Reverse-mode automatic differentiation over 2-D `f64` matrices.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters are
//! borrowed from a [`ParamStore`] rather than copied, so a graph is cheap to
//! build once per training step. Calling [`Graph::backward`] on a `1 x 1`
//! node returns gradients for every parameter that took part.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis};

use super::params::{ParamId, ParamStore};

pub type Mat = Array2<f64>;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// One attention problem inside a packed batch: query rows
/// `q_start..q_start + q_len` attend to key rows `k_start..k_start + k_len`,
/// preceded by the optional `shared` key range `(start, len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnSegment {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
    pub shared: Option<(usize, usize)>,
}

impl AttnSegment {
    /// Self-attention over rows `start..start + len`.
    pub fn square(start: usize, len: usize) -> Self {
        AttnSegment {
            q_start: start,
            q_len: len,
            k_start: start,
            k_len: len,
            shared: None,
        }
    }

    /// Key row indices, shared range first.
    pub fn key_rows(&self) -> Vec<usize> {
        let shared = self.shared.map_or(0..0, |(s, l)| s..s + l);
        shared.chain(self.k_start..self.k_start + self.k_len).collect()
    }
}

fn scatter_rows(dst: &mut Mat, rows: &[usize], cols: std::ops::Range<usize>, src: &Mat) {
    for (i, &r) in rows.iter().enumerate() {
        let mut row = dst.slice_mut(s![r, cols.clone()]);
        row += &src.row(i);
    }
}

fn select_block(m: &Mat, rows: &[usize], cols: std::ops::Range<usize>) -> Mat {
    m.slice(s![.., cols]).select(Axis(0), rows)
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        segments: Vec<AttnSegment>,
        heads: usize,
        probs: Vec<Mat>,
    },
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    StackColumns(Vec<Var>),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Mat,
        count: usize,
    },
    BceWithLogits {
        logits: Var,
        targets: Mat,
    },
}

struct Node {
    value: Option<Mat>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    nodes: Vec<Option<Mat>>,
    params: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Mat> {
        self.params.get(id.index()).and_then(|g| g.as_ref())
    }

    pub fn var(&self, v: Var) -> Option<&Mat> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Mat> {
        self.params.iter_mut().flatten()
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Mat)> {
        self.params
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId::new(i), g)))
    }

    /// Global L2 norm over all parameter gradients.
    pub fn global_norm(&self) -> f64 {
        self.params
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Adds `other` into `self` (parameter gradients only).
    pub fn accumulate(&mut self, other: &Gradients) {
        if self.params.len() < other.params.len() {
            self.params.resize(other.params.len(), None);
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if let Some(src) = src {
                match dst {
                    Some(d) => *d += src,
                    None => *dst = Some(src.clone()),
                }
            }
        }
    }
}

pub(crate) fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let t = (C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

pub(crate) fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Scaled dot-product attention for one head of one segment. Returns the
/// row-stochastic probabilities and the attended values.
fn attend(
    q: ndarray::ArrayView2<f64>,
    k: ndarray::ArrayView2<f64>,
    v: ndarray::ArrayView2<f64>,
    causal: bool,
) -> (Mat, Mat) {
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut scores = q.dot(&k.t());
    scores.mapv_inplace(|x| x * scale);
    for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
        if causal {
            for j in (i + 1)..row.len() {
                row[j] = f64::NEG_INFINITY;
            }
        }
        softmax_in_place(row.as_slice_mut().expect("row-major scores"));
    }
    let out = scores.dot(&v);
    (scores, out)
}

/// Forward-only multi-head attention on plain matrices, shared with the
/// cached decoding path.
pub(crate) fn attention_forward(
    q: &Mat,
    k: &Mat,
    v: &Mat,
    segments: &[AttnSegment],
    heads: usize,
    causal: bool,
) -> (Mat, Vec<Mat>) {
    let d = q.ncols();
    let dh = d / heads;
    let mut out = Mat::zeros((q.nrows(), d));
    let mut probs = Vec::with_capacity(segments.len() * heads);
    for seg in segments {
        assert!(!(causal && seg.shared.is_some()), "causal attention with shared keys");
        let qr = seg.q_start..seg.q_start + seg.q_len;
        let kr = seg.key_rows();
        for h in 0..heads {
            let c = h * dh..(h + 1) * dh;
            let (p, o) = attend(
                q.slice(s![qr.clone(), c.clone()]),
                select_block(k, &kr, c.clone()).view(),
                select_block(v, &kr, c.clone()).view(),
                causal,
            );
            out.slice_mut(s![qr.clone(), c]).assign(&o);
            probs.push(p);
        }
    }
    (out, probs)
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::with_capacity(256),
            params: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.store.value(id),
            _ => node.value.as_ref().expect("non-parameter node holds a value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// An input whose gradient is recorded (used by gradient checks).
    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a * b^T`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMulBT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(out, Op::AddRow(a, row), ng)
    }

    /// Adds an `m x 1` column to every column of `a`.
    pub fn add_col(&mut self, a: Var, col: Var) -> Var {
        let out = self.value(a) + self.value(col);
        let ng = self.ng(a) || self.ng(col);
        self.push(out, Op::AddCol(a, col), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a) * factor;
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, factor), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(gelu);
        let ng = self.ng(a);
        self.push(out, Op::Gelu(a), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        )
    }

    /// Fused multi-head scaled dot-product attention over packed segments.
    /// `q`, `k`, `v` are already projected; `causal` requires square segments.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        segments: Vec<AttnSegment>,
        heads: usize,
        causal: bool,
    ) -> Var {
        let (out, probs) = attention_forward(
            self.value(q),
            self.value(k),
            self.value(v),
            &segments,
            heads,
            causal,
        );
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                segments,
                heads,
                probs,
            },
            ng,
        )
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let av = self.value(a);
        let mut out = Mat::zeros((idx.len(), av.ncols()));
        for (i, &r) in idx.iter().enumerate() {
            out.row_mut(i).assign(&av.row(r));
        }
        let ng = self.ng(a);
        self.push(out, Op::GatherRows(a, idx), ng)
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("equal column counts");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::ConcatRows(parts), ng)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .mean_axis(Axis(0))
            .expect("at least one row")
            .insert_axis(Axis(0));
        let ng = self.ng(a);
        self.push(out, Op::MeanRows(a), ng)
    }

    /// Turns K matrices of shape `m x n` into one `(m * n) x K` matrix whose
    /// row `i * n + j` holds entry `(i, j)` of each input.
    pub fn stack_columns(&mut self, parts: Vec<Var>) -> Var {
        let (m, n) = self.value(parts[0]).dim();
        let mut out = Mat::zeros((m * n, parts.len()));
        for (k, &p) in parts.iter().enumerate() {
            let pv = self.value(p);
            for ((i, j), &x) in pv.indexed_iter() {
                out[[i * n + j, k]] = x;
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::StackColumns(parts), ng)
    }

    /// Mean softmax cross-entropy over rows that have a target.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<Option<usize>>) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), targets.len(), "one target slot per logit row");
        let mut probs = lv.clone();
        let mut total = 0.0;
        let mut count = 0;
        for (mut row, t) in probs.rows_mut().into_iter().zip(&targets) {
            let slice = row.as_slice_mut().expect("row-major logits");
            if let Some(t) = *t {
                total -= log_softmax(slice)[t];
                count += 1;
            }
            softmax_in_place(slice);
        }
        let loss = if count > 0 { total / count as f64 } else { 0.0 };
        let ng = self.ng(logits);
        self.push(
            Mat::from_elem((1, 1), loss),
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            },
            ng,
        )
    }

    /// Mean binary cross-entropy with logits over every entry.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Mat) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.dim(), targets.dim());
        let total: f64 = lv
            .iter()
            .zip(targets.iter())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum();
        let loss = total / lv.len() as f64;
        let ng = self.ng(logits);
        self.push(
            Mat::from_elem((1, 1), loss),
            Op::BceWithLogits { logits, targets },
            ng,
        )
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "loss must be 1 x 1");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::from_elem((1, 1), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, Var(i), &dy, &mut grads);
            grads[i] = Some(dy);
        }

        let mut params = vec![None; self.store.len()];
        for (&id, &v) in &self.params {
            params[id.index()] = grads[v.0].take();
        }
        Gradients {
            nodes: grads,
            params,
        }
    }

    fn acc(&self, grads: &mut [Option<Mat>], v: Var, g: Mat) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => *existing += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op, out: Var, dy: &Mat, grads: &mut [Option<Mat>]) {
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, dy.dot(&self.value(*b).t()));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, self.value(*a).t().dot(dy));
                }
            }
            Op::MatMulBT(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, dy.dot(self.value(*b)));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, dy.t().dot(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, dy.clone());
                self.acc(grads, *b, dy.clone());
            }
            Op::AddRow(a, row) => {
                self.acc(grads, *a, dy.clone());
                self.acc(grads, *row, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::AddCol(a, col) => {
                self.acc(grads, *a, dy.clone());
                self.acc(grads, *col, dy.sum_axis(Axis(1)).insert_axis(Axis(1)));
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, dy * self.value(*b));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, dy * self.value(*a));
                }
            }
            Op::Scale(a, f) => self.acc(grads, *a, dy * *f),
            Op::Gelu(a) => {
                let mut g = self.value(*a).mapv(gelu_grad);
                g *= dy;
                self.acc(grads, *a, g);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                if self.ng(*gamma) {
                    let dg = (dy * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.acc(grads, *gamma, dg);
                }
                if self.ng(*beta) {
                    self.acc(grads, *beta, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.ng(*x) {
                    let n = xhat.ncols() as f64;
                    let dxhat = dy * self.value(*gamma);
                    let mut dx = Mat::zeros(dxhat.dim());
                    for r in 0..dxhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let sum_dh = dh.sum();
                        let sum_dh_xh = dh.dot(&xh);
                        let inv = inv_std[r];
                        for c in 0..dxhat.ncols() {
                            dx[[r, c]] =
                                inv / n * (n * dh[c] - sum_dh - xh[c] * sum_dh_xh);
                        }
                    }
                    self.acc(grads, *x, dx);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                segments,
                heads,
                probs,
            } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let d = qv.ncols();
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut dq = Mat::zeros(qv.dim());
                let mut dk = Mat::zeros(kv.dim());
                let mut dv = Mat::zeros(vv.dim());
                let mut pi = 0;
                for seg in segments {
                    let qr = seg.q_start..seg.q_start + seg.q_len;
                    let kr = seg.key_rows();
                    for h in 0..*heads {
                        let c = h * dh..(h + 1) * dh;
                        let p = &probs[pi];
                        pi += 1;
                        let d_out = dy.slice(s![qr.clone(), c.clone()]);
                        let qs = qv.slice(s![qr.clone(), c.clone()]);
                        let ks = select_block(kv, &kr, c.clone());
                        let vs = select_block(vv, &kr, c.clone());
                        scatter_rows(&mut dv, &kr, c.clone(), &p.t().dot(&d_out));
                        let dp = d_out.dot(&vs.t());
                        let mut ds = p * &dp;
                        for (mut ds_row, p_row) in ds.rows_mut().into_iter().zip(p.rows()) {
                            let dot: f64 = ds_row.sum();
                            ds_row.zip_mut_with(&p_row, |x, &pp| *x -= pp * dot);
                        }
                        ds.mapv_inplace(|x| x * scale);
                        {
                            let mut t = dq.slice_mut(s![qr.clone(), c.clone()]);
                            t += &ds.dot(&ks);
                        }
                        scatter_rows(&mut dk, &kr, c.clone(), &ds.t().dot(&qs));
                    }
                }
                self.acc(grads, *q, dq);
                self.acc(grads, *k, dk);
                self.acc(grads, *v, dv);
            }
            Op::GatherRows(a, idx) => {
                if self.ng(*a) {
                    let mut da = Mat::zeros(self.value(*a).dim());
                    for (i, &r) in idx.iter().enumerate() {
                        let mut row = da.row_mut(r);
                        row += &dy.row(i);
                    }
                    self.acc(grads, *a, da);
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let rows = self.value(p).nrows();
                    self.acc(grads, p, dy.slice(s![start..start + rows, ..]).to_owned());
                    start += rows;
                }
            }
            Op::MeanRows(a) => {
                let (m, n) = self.value(*a).dim();
                let row = dy.row(0).mapv(|x| x / m as f64);
                let da = row.broadcast((m, n)).expect("broadcast mean grad").to_owned();
                self.acc(grads, *a, da);
            }
            Op::StackColumns(parts) => {
                let (m, n) = self.value(parts[0]).dim();
                for (k, &p) in parts.iter().enumerate() {
                    if !self.ng(p) {
                        continue;
                    }
                    let mut dp = Mat::zeros((m, n));
                    for ((i, j), x) in dp.indexed_iter_mut() {
                        *x = dy[[i * n + j, k]];
                    }
                    self.acc(grads, p, dp);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let g = dy[[0, 0]] / *count as f64;
                let mut dl = Mat::zeros(probs.dim());
                for (r, t) in targets.iter().enumerate() {
                    if let Some(t) = *t {
                        let mut row = dl.row_mut(r);
                        row.assign(&probs.row(r));
                        row[t] -= 1.0;
                        row.mapv_inplace(|x| x * g);
                    }
                }
                self.acc(grads, *logits, dl);
            }
            Op::BceWithLogits { logits, targets } => {
                let lv = self.value(*logits);
                let g = dy[[0, 0]] / lv.len() as f64;
                let mut dl = lv.mapv(sigmoid);
                dl -= targets;
                dl.mapv_inplace(|x| x * g);
                self.acc(grads, *logits, dl);
            }
        }
        let _ = out;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut impl Rng, r: usize, c: usize) -> Mat {
        Mat::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    /// Reduces `out` to a scalar with fixed random weights.
    fn project(g: &mut Graph, out: Var, weights: &Mat) -> Var {
        let w = g.constant(weights.clone());
        let prod = g.mul(out, w);
        let mean = g.mean_rows(prod);
        let ones = g.constant(Mat::ones((weights.ncols(), 1)));
        g.matmul(mean, ones)
    }

    /// Checks gradients of `build` with respect to each input matrix.
    fn check(inputs: Vec<Mat>, build: impl Fn(&mut Graph, &[Var]) -> Var) {
        let store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let eval = |ins: &[Mat], weights: Option<&Mat>| -> (f64, Option<Vec<Mat>>, Mat) {
            let mut g = Graph::new(&store);
            let vars: Vec<Var> = ins.iter().map(|m| g.input(m.clone())).collect();
            let out = build(&mut g, &vars);
            let (r, c) = g.value(out).dim();
            let w = weights.cloned().unwrap_or_else(|| Mat::ones((r, c)));
            let loss = project(&mut g, out, &w);
            let grads = g.backward(loss);
            let gs = vars.iter().map(|&v| grads.var(v).cloned().unwrap_or_else(|| Mat::zeros(g.value(v).dim()))).collect();
            (g.scalar(loss), Some(gs), w)
        };
        let (_, _, shape_probe) = eval(&inputs, None);
        let weights = rand_mat(&mut rng, shape_probe.nrows(), shape_probe.ncols());
        let (_, analytic, _) = eval(&inputs, Some(&weights));
        let analytic = analytic.unwrap();
        let eps = 1e-6;
        for (k, input) in inputs.iter().enumerate() {
            let mut numeric = Mat::zeros(input.dim());
            for idx in 0..input.len() {
                let (r, c) = (idx / input.ncols(), idx % input.ncols());
                let mut plus = inputs.clone();
                plus[k][[r, c]] += eps;
                let mut minus = inputs.clone();
                minus[k][[r, c]] -= eps;
                numeric[[r, c]] =
                    (eval(&plus, Some(&weights)).0 - eval(&minus, Some(&weights)).0) / (2.0 * eps);
            }
            let err = crate::nn::gradcheck::relative_error(&analytic[k], &numeric);
            assert!(err < 1e-6, "input {k}: relative error {err}");
        }
    }

    #[test]
    fn elementwise_and_matmul_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_mat(&mut rng, 3, 4);
        let b = rand_mat(&mut rng, 4, 2);
        let c = rand_mat(&mut rng, 5, 4);
        check(vec![a.clone(), b.clone()], |g, v| g.matmul(v[0], v[1]));
        check(vec![a.clone(), c.clone()], |g, v| g.matmul_bt(v[0], v[1]));
        check(vec![a.clone(), a.mapv(|x| x * 0.5)], |g, v| {
            let m = g.mul(v[0], v[1]);
            let s = g.add(m, v[0]);
            let s = g.scale(s, -1.5);
            g.gelu(s)
        });
        check(vec![a.clone(), rand_mat(&mut rng, 1, 4), rand_mat(&mut rng, 3, 1)], |g, v| {
            let r = g.add_row(v[0], v[1]);
            g.add_col(r, v[2])
        });
    }

    #[test]
    fn layer_norm_gather_concat_mean_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_mat(&mut rng, 4, 6);
        let gamma = rand_mat(&mut rng, 1, 6);
        let beta = rand_mat(&mut rng, 1, 6);
        check(vec![x.clone(), gamma, beta], |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5));
        check(vec![x.clone()], |g, v| g.gather_rows(v[0], vec![3, 0, 3, 1]));
        check(vec![x.clone(), rand_mat(&mut rng, 2, 6)], |g, v| {
            let c = g.concat_rows(vec![v[0], v[1]]);
            let m = g.mean_rows(c);
            g.concat_rows(vec![c, m])
        });
        check(vec![rand_mat(&mut rng, 2, 3), rand_mat(&mut rng, 2, 3)], |g, v| {
            g.stack_columns(vec![v[0], v[1]])
        });
    }

    #[test]
    fn attention_segments_and_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = rand_mat(&mut rng, 5, 4);
        let k = rand_mat(&mut rng, 7, 4);
        let v = rand_mat(&mut rng, 7, 4);
        let segs = vec![
            AttnSegment { q_start: 0, q_len: 2, k_start: 0, k_len: 3, shared: None },
            AttnSegment { q_start: 2, q_len: 3, k_start: 3, k_len: 4, shared: Some((0, 2)) },
        ];
        check(vec![q, k, v], move |g, x| g.attention(x[0], x[1], x[2], segs.clone(), 2, false));
        let s = rand_mat(&mut rng, 6, 4);
        check(vec![s.clone(), s.mapv(|x| x * 0.7), s.mapv(|x| -x)], |g, x| {
            g.attention(x[0], x[1], x[2], vec![AttnSegment::square(0, 4), AttnSegment::square(4, 2)], 2, true)
        });
    }

    #[test]
    fn causal_attention_ignores_future_rows() {
        let store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_mat(&mut rng, 4, 4);
        let mut y = x.clone();
        y.row_mut(3).fill(9.0);
        let run = |m: &Mat| {
            let mut g = Graph::new(&store);
            let v = g.constant(m.clone());
            let o = g.attention(v, v, v, vec![AttnSegment::square(0, 4)], 2, true);
            g.value(o).clone()
        };
        let (a, b) = (run(&x), run(&y));
        assert_eq!(a.slice(s![0..3, ..]), b.slice(s![0..3, ..]));
    }

    #[test]
    fn losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logits = rand_mat(&mut rng, 4, 3);
        check(vec![logits.clone()], |g, v| g.cross_entropy(v[0], vec![Some(0), None, Some(2), Some(1)]));
        let targets = Mat::from_shape_vec((2, 3), vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        check(vec![rand_mat(&mut rng, 2, 3)], move |g, v| g.bce_with_logits(v[0], targets.clone()));

        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let z = g.constant(Mat::zeros((5, 3)));
        let ce = g.cross_entropy(z, vec![Some(1); 5]);
        assert!((g.scalar(ce) - 3f64.ln()).abs() < 1e-12);
        let z = g.constant(Mat::zeros((1, 6)));
        let bce = g.bce_with_logits(z, Mat::from_elem((1, 6), 1.0));
        assert!((g.scalar(bce) - 2f64.ln()).abs() < 1e-12);
    }
}
