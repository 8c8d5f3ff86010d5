//! Reverse-mode autodiff over dense rank-2 tensors.
//!
//! A [`Graph`] is a tape of nodes; each op appends a node holding its value
//! and enough structure to propagate gradients backward. Scalars are [1,1]
//! tensors. Graphs are rebuilt per forward pass; parameters persist in a
//! [`Parameters`](super::nn::Parameters) store and are bound into a graph as
//! tracked leaves. Backward accumulates, so calling it twice doubles
//! gradients, matching the accumulate-then-step training contract.

use super::nn::{ParamId, Parameters};
use super::scalar::Scalar;
use std::collections::HashMap;

/// Handle to a node in one graph. Ids are only meaningful within the graph
/// that created them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_EPS: f64 = 1e-5;

fn gelu_cdf<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    half * (T::ONE + (x * T::from_f64(INV_SQRT_2)).erf())
}

fn gelu_pdf<T: Scalar>(x: T) -> T {
    T::from_f64(INV_SQRT_2PI) * (-(x * x) * T::from_f64(0.5)).exp()
}

enum Op<T: Scalar> {
    Leaf { param: Option<ParamId> },
    Matmul(TensorId, TensorId),
    Transpose(TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Scale(TensorId, T),
    AddBias(TensorId, TensorId),
    ConcatCols(Vec<TensorId>),
    SliceCols(TensorId, usize, usize),
    ConcatRows(Vec<TensorId>),
    SliceRows(TensorId, usize, usize),
    SoftmaxRows(TensorId),
    Gelu(TensorId),
    LayerNormRows(TensorId),
    MeanAll(TensorId),
    SmoothL1 {
        pred: TensorId,
        target: Vec<T>,
        wrap: Vec<bool>,
        beta: T,
    },
}

struct Node<T: Scalar> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    grad: Option<Vec<T>>,
    needs_grad: bool,
    op: Op<T>,
}

impl<T: Scalar> Node<T> {
    fn grad_mut(&mut self) -> &mut [T] {
        self.grad
            .get_or_insert_with(|| vec![T::ZERO; self.rows * self.cols])
    }
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    bound: HashMap<(u64, usize), TensorId>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            bound: HashMap::new(),
        }
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, needs: bool, op: Op<T>) -> TensorId {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            grad: None,
            needs_grad: needs,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].value
    }

    /// Scalar convenience accessor; panics unless the node is [1,1].
    pub fn scalar(&self, id: TensorId) -> T {
        let n = &self.nodes[id.0];
        assert_eq!((n.rows, n.cols), (1, 1), "not a scalar node");
        n.value[0]
    }

    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Untracked leaf.
    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<T>) -> TensorId {
        assert_eq!(value.len(), rows * cols, "constant shape mismatch");
        self.push(rows, cols, value, false, Op::Leaf { param: None })
    }

    pub fn constant_f64(&mut self, rows: usize, cols: usize, value: &[f64]) -> TensorId {
        let v = value.iter().map(|&x| T::from_f64(x)).collect();
        self.constant(rows, cols, v)
    }

    /// Bind a parameter as a tracked leaf. Binding the same parameter twice
    /// returns the same node, so its gradient accumulates in one place.
    pub fn param(&mut self, store: &Parameters<T>, id: ParamId) -> TensorId {
        let key = (store.store_id(), id.0);
        if let Some(&t) = self.bound.get(&key) {
            return t;
        }
        let entry = store.entry(id);
        let t = self.push(
            entry.rows,
            entry.cols,
            entry.value.clone(),
            true,
            Op::Leaf { param: Some(id) },
        );
        self.bound.insert(key, t);
        t
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![T::ZERO; n * m];
        matmul_acc(self.value(a), self.value(b), n, k, m, &mut out);
        let needs = self.needs(a) || self.needs(b);
        self.push(n, m, out, needs, Op::Matmul(a, b))
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let (n, m) = self.shape(a);
        let v = self.value(a);
        let mut out = vec![T::ZERO; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = v[i * m + j];
            }
        }
        let needs = self.needs(a);
        self.push(m, n, out, needs, Op::Transpose(a))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (n, m) = self.shape(a);
        assert_eq!((n, m), self.shape(b), "add shape mismatch");
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        self.push(n, m, out, needs, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (n, m) = self.shape(a);
        assert_eq!((n, m), self.shape(b), "sub shape mismatch");
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x - y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        self.push(n, m, out, needs, Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: TensorId, c: T) -> TensorId {
        let (n, m) = self.shape(a);
        let out = self.value(a).iter().map(|&x| x * c).collect();
        let needs = self.needs(a);
        self.push(n, m, out, needs, Op::Scale(a, c))
    }

    /// Row-broadcast bias add: x [n,m] + b [1,m].
    pub fn add_bias(&mut self, x: TensorId, b: TensorId) -> TensorId {
        let (n, m) = self.shape(x);
        assert_eq!(self.shape(b), (1, m), "bias shape mismatch");
        let xv = self.value(x);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                out.push(xv[i * m + j] + bv[j]);
            }
        }
        let needs = self.needs(x) || self.needs(b);
        self.push(n, m, out, needs, Op::AddBias(x, b))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty());
        let n = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                let (pn, pm) = self.shape(p);
                assert_eq!(pn, n, "concat_cols row mismatch");
                out.extend_from_slice(&self.value(p)[i * pm..(i + 1) * pm]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(n, total, out, needs, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: TensorId, lo: usize, hi: usize) -> TensorId {
        let (n, m) = self.shape(a);
        assert!(lo < hi && hi <= m, "slice_cols bounds");
        let w = hi - lo;
        let v = self.value(a);
        let mut out = Vec::with_capacity(n * w);
        for i in 0..n {
            out.extend_from_slice(&v[i * m + lo..i * m + hi]);
        }
        let needs = self.needs(a);
        self.push(n, w, out, needs, Op::SliceCols(a, lo, hi))
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty());
        let m = self.shape(parts[0]).1;
        let total: usize = parts.iter().map(|&p| self.shape(p).0).sum();
        let mut out = Vec::with_capacity(total * m);
        for &p in parts {
            assert_eq!(self.shape(p).1, m, "concat_rows col mismatch");
            out.extend_from_slice(self.value(p));
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(total, m, out, needs, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: TensorId, lo: usize, hi: usize) -> TensorId {
        let (n, m) = self.shape(a);
        assert!(lo < hi && hi <= n, "slice_rows bounds");
        let out = self.value(a)[lo * m..hi * m].to_vec();
        let needs = self.needs(a);
        self.push(hi - lo, m, out, needs, Op::SliceRows(a, lo, hi))
    }

    /// Numerically stable per-row softmax.
    pub fn softmax_rows(&mut self, a: TensorId) -> TensorId {
        let (n, m) = self.shape(a);
        let v = self.value(a);
        let mut out = vec![T::ZERO; n * m];
        for i in 0..n {
            let row = &v[i * m..(i + 1) * m];
            let mut mx = row[0];
            for &x in row {
                mx = mx.maximum(x);
            }
            let orow = &mut out[i * m..(i + 1) * m];
            let mut sum = T::ZERO;
            for (o, &x) in orow.iter_mut().zip(row) {
                *o = (x - mx).exp();
                sum += *o;
            }
            for o in orow.iter_mut() {
                *o = *o / sum;
            }
        }
        let needs = self.needs(a);
        self.push(n, m, out, needs, Op::SoftmaxRows(a))
    }

    /// Exact GELU: x * Phi(x) with the Gaussian CDF.
    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        let (n, m) = self.shape(a);
        let out = self.value(a).iter().map(|&x| x * gelu_cdf(x)).collect();
        let needs = self.needs(a);
        self.push(n, m, out, needs, Op::Gelu(a))
    }

    /// Per-row layer norm without affine parameters (used by the optional
    /// pre-norm flag, off by default).
    pub fn layer_norm_rows(&mut self, a: TensorId) -> TensorId {
        let (n, m) = self.shape(a);
        let v = self.value(a);
        let inv_m = T::from_f64(1.0 / m as f64);
        let mut out = vec![T::ZERO; n * m];
        for i in 0..n {
            let row = &v[i * m..(i + 1) * m];
            let mut mean = T::ZERO;
            for &x in row {
                mean += x;
            }
            mean *= inv_m;
            let mut var = T::ZERO;
            for &x in row {
                let d = x - mean;
                var += d * d;
            }
            var *= inv_m;
            let inv_std = T::ONE / (var + T::from_f64(LN_EPS)).sqrt();
            for (o, &x) in out[i * m..(i + 1) * m].iter_mut().zip(row) {
                *o = (x - mean) * inv_std;
            }
        }
        let needs = self.needs(a);
        self.push(n, m, out, needs, Op::LayerNormRows(a))
    }

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let (n, m) = self.shape(a);
        let mut sum = T::ZERO;
        for &x in self.value(a) {
            sum += x;
        }
        let out = vec![sum * T::from_f64(1.0 / (n * m) as f64)];
        let needs = self.needs(a);
        self.push(1, 1, out, needs, Op::MeanAll(a))
    }

    /// Smooth L1 (Huber) loss against a fixed target, mean over elements.
    ///
    /// Elements flagged in `wrap` have their difference wrapped to
    /// [-180, 180) degrees before the loss. Per-element gradient magnitude is
    /// clamped to 1 (times the upstream gradient / element count).
    pub fn smooth_l1(
        &mut self,
        pred: TensorId,
        target: &[f64],
        wrap: Option<&[bool]>,
        beta: f64,
    ) -> TensorId {
        let (n, m) = self.shape(pred);
        assert_eq!(n * m, target.len(), "smooth_l1 shape mismatch");
        let wrap: Vec<bool> = match wrap {
            Some(w) => {
                assert_eq!(w.len(), target.len(), "wrap mask length");
                w.to_vec()
            }
            None => vec![false; target.len()],
        };
        let beta_t = T::from_f64(beta);
        let target_t: Vec<T> = target.iter().map(|&x| T::from_f64(x)).collect();
        let mut total = T::ZERO;
        for ((&p, &t), &w) in self.value(pred).iter().zip(&target_t).zip(&wrap) {
            let d = diff_maybe_wrapped(p, t, w);
            let ad = d.abs();
            total += if ad < beta_t {
                T::from_f64(0.5) * d * d / beta_t
            } else {
                ad - T::from_f64(0.5) * beta_t
            };
        }
        let out = vec![total * T::from_f64(1.0 / target.len() as f64)];
        let needs = self.needs(pred);
        self.push(
            1,
            1,
            out,
            needs,
            Op::SmoothL1 {
                pred,
                target: target_t,
                wrap,
                beta: beta_t,
            },
        )
    }

    /// Accumulate gradients of `loss` into every tracked node. Each call adds
    /// one full dLoss/d(node) contribution, so repeated calls accumulate.
    pub fn backward(&mut self, loss: TensorId) {
        let (r, c) = self.shape(loss);
        assert_eq!((r, c), (1, 1), "backward requires a scalar loss");
        if !self.needs(loss) {
            return;
        }
        // Propagate on clean buffers, then merge prior accumulations back.
        let prior: Vec<Option<Vec<T>>> = self.nodes.iter_mut().map(|n| n.grad.take()).collect();
        self.nodes[loss.0].grad_mut()[0] = T::ONE;
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            self.propagate(i);
        }
        for (node, old) in self.nodes.iter_mut().zip(prior) {
            if let Some(old) = old {
                match &mut node.grad {
                    Some(g) => {
                        for (a, b) in g.iter_mut().zip(&old) {
                            *a += *b;
                        }
                    }
                    None => node.grad = Some(old),
                }
            }
        }
    }

    fn propagate(&mut self, i: usize) {
        let (left, right) = self.nodes.split_at_mut(i);
        let node = &right[0];
        let dy = node.grad.as_deref().expect("checked by caller");
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Matmul(a, b) => {
                let (n, k) = (left[a.0].rows, left[a.0].cols);
                let m = left[b.0].cols;
                if left[a.0].needs_grad {
                    // da[i,l] += dot(dy[i,:], b[l,:])
                    let bval = std::mem::take(&mut left[b.0].value);
                    {
                        let da = ensure_grad(&mut left[a.0]);
                        for r in 0..n {
                            let dyrow = &dy[r * m..(r + 1) * m];
                            for l in 0..k {
                                let brow = &bval[l * m..(l + 1) * m];
                                let mut acc = T::ZERO;
                                for (x, y) in dyrow.iter().zip(brow) {
                                    acc += *x * *y;
                                }
                                da[r * k + l] += acc;
                            }
                        }
                    }
                    left[b.0].value = bval;
                }
                if left[b.0].needs_grad {
                    // db[l,:] += a[i,l] * dy[i,:]
                    let aval = std::mem::take(&mut left[a.0].value);
                    {
                        let db = ensure_grad(&mut left[b.0]);
                        for r in 0..n {
                            let dyrow = &dy[r * m..(r + 1) * m];
                            for l in 0..k {
                                let ail = aval[r * k + l];
                                let dbrow = &mut db[l * m..(l + 1) * m];
                                for (o, &g) in dbrow.iter_mut().zip(dyrow) {
                                    *o += ail * g;
                                }
                            }
                        }
                    }
                    left[a.0].value = aval;
                }
            }
            Op::Transpose(a) => {
                let (n, m) = (left[a.0].rows, left[a.0].cols);
                if left[a.0].needs_grad {
                    let da = ensure_grad(&mut left[a.0]);
                    for r in 0..n {
                        for c in 0..m {
                            da[r * m + c] += dy[c * n + r];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for &t in &[*a, *b] {
                    if left[t.0].needs_grad {
                        let g = ensure_grad(&mut left[t.0]);
                        for (o, &d) in g.iter_mut().zip(dy) {
                            *o += d;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if left[a.0].needs_grad {
                    let g = ensure_grad(&mut left[a.0]);
                    for (o, &d) in g.iter_mut().zip(dy) {
                        *o += d;
                    }
                }
                if left[b.0].needs_grad {
                    let g = ensure_grad(&mut left[b.0]);
                    for (o, &d) in g.iter_mut().zip(dy) {
                        *o -= d;
                    }
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                if left[a.0].needs_grad {
                    let g = ensure_grad(&mut left[a.0]);
                    for (o, &d) in g.iter_mut().zip(dy) {
                        *o += d * c;
                    }
                }
            }
            Op::AddBias(x, b) => {
                let (n, m) = (left[x.0].rows, left[x.0].cols);
                if left[x.0].needs_grad {
                    let g = ensure_grad(&mut left[x.0]);
                    for (o, &d) in g.iter_mut().zip(dy) {
                        *o += d;
                    }
                }
                if left[b.0].needs_grad {
                    let g = ensure_grad(&mut left[b.0]);
                    for r in 0..n {
                        for c in 0..m {
                            g[c] += dy[r * m + c];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let parts = parts.clone();
                let n = node.rows;
                let total = node.cols;
                let mut offset = 0;
                for p in parts {
                    let pm = left[p.0].cols;
                    if left[p.0].needs_grad {
                        let g = ensure_grad(&mut left[p.0]);
                        for r in 0..n {
                            for c in 0..pm {
                                g[r * pm + c] += dy[r * total + offset + c];
                            }
                        }
                    }
                    offset += pm;
                }
            }
            Op::SliceCols(a, lo, _hi) => {
                let (lo, w) = (*lo, node.cols);
                let n = node.rows;
                let m = left[a.0].cols;
                if left[a.0].needs_grad {
                    let g = ensure_grad(&mut left[a.0]);
                    for r in 0..n {
                        for c in 0..w {
                            g[r * m + lo + c] += dy[r * w + c];
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let parts = parts.clone();
                let m = node.cols;
                let mut offset = 0;
                for p in parts {
                    let pn = left[p.0].rows;
                    if left[p.0].needs_grad {
                        let g = ensure_grad(&mut left[p.0]);
                        for (o, &d) in g.iter_mut().zip(&dy[offset * m..(offset + pn) * m]) {
                            *o += d;
                        }
                    }
                    offset += pn;
                }
            }
            Op::SliceRows(a, lo, _hi) => {
                let lo = *lo;
                let m = node.cols;
                let rows = node.rows;
                if left[a.0].needs_grad {
                    let g = ensure_grad(&mut left[a.0]);
                    for (o, &d) in g[lo * m..(lo + rows) * m].iter_mut().zip(dy) {
                        *o += d;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let (n, m) = (node.rows, node.cols);
                let y = &node.value;
                if left[a.0].needs_grad {
                    let g = ensure_grad(&mut left[a.0]);
                    for r in 0..n {
                        let yrow = &y[r * m..(r + 1) * m];
                        let dyrow = &dy[r * m..(r + 1) * m];
                        let mut dot = T::ZERO;
                        for (&yv, &dv) in yrow.iter().zip(dyrow) {
                            dot += yv * dv;
                        }
                        let grow = &mut g[r * m..(r + 1) * m];
                        for ((o, &yv), &dv) in grow.iter_mut().zip(yrow).zip(dyrow) {
                            *o += yv * (dv - dot);
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                if left[a.0].needs_grad {
                    let xval = std::mem::take(&mut left[a.0].value);
                    {
                        let g = ensure_grad(&mut left[a.0]);
                        for ((o, &x), &d) in g.iter_mut().zip(&xval).zip(dy) {
                            *o += d * (gelu_cdf(x) + x * gelu_pdf(x));
                        }
                    }
                    left[a.0].value = xval;
                }
            }
            Op::LayerNormRows(a) => {
                let (n, m) = (node.rows, node.cols);
                let z = &node.value;
                let inv_m = T::from_f64(1.0 / m as f64);
                if left[a.0].needs_grad {
                    let xval = std::mem::take(&mut left[a.0].value);
                    {
                        let g = ensure_grad(&mut left[a.0]);
                        for r in 0..n {
                            let xrow = &xval[r * m..(r + 1) * m];
                            let zrow = &z[r * m..(r + 1) * m];
                            let dyrow = &dy[r * m..(r + 1) * m];
                            let mut mean = T::ZERO;
                            for &x in xrow {
                                mean += x;
                            }
                            mean *= inv_m;
                            let mut var = T::ZERO;
                            for &x in xrow {
                                let d = x - mean;
                                var += d * d;
                            }
                            var *= inv_m;
                            let inv_std = T::ONE / (var + T::from_f64(LN_EPS)).sqrt();
                            let mut mean_dy = T::ZERO;
                            let mut mean_dyz = T::ZERO;
                            for (&d, &zv) in dyrow.iter().zip(zrow) {
                                mean_dy += d;
                                mean_dyz += d * zv;
                            }
                            mean_dy *= inv_m;
                            mean_dyz *= inv_m;
                            let grow = &mut g[r * m..(r + 1) * m];
                            for ((o, &d), &zv) in grow.iter_mut().zip(dyrow).zip(zrow) {
                                *o += inv_std * (d - mean_dy - zv * mean_dyz);
                            }
                        }
                    }
                    left[a.0].value = xval;
                }
            }
            Op::MeanAll(a) => {
                let count = left[a.0].rows * left[a.0].cols;
                let d = dy[0] * T::from_f64(1.0 / count as f64);
                if left[a.0].needs_grad {
                    let g = ensure_grad(&mut left[a.0]);
                    for o in g.iter_mut() {
                        *o += d;
                    }
                }
            }
            Op::SmoothL1 {
                pred,
                target,
                wrap,
                beta,
            } => {
                let pred = *pred;
                let beta = *beta;
                let target = target.clone();
                let wrap = wrap.clone();
                let scale = dy[0] * T::from_f64(1.0 / target.len() as f64);
                if left[pred.0].needs_grad {
                    let pval = std::mem::take(&mut left[pred.0].value);
                    {
                        let g = ensure_grad(&mut left[pred.0]);
                        for ((o, (&p, &t)), &w) in
                            g.iter_mut().zip(pval.iter().zip(&target)).zip(&wrap)
                        {
                            let d = diff_maybe_wrapped(p, t, w);
                            let slope = if d > beta {
                                T::ONE
                            } else if d < -beta {
                                -T::ONE
                            } else {
                                d / beta
                            };
                            *o += scale * slope;
                        }
                    }
                    left[pred.0].value = pval;
                }
            }
        }
    }

    /// Collect accumulated gradients for every bound parameter.
    pub fn param_grads(&self) -> Vec<(ParamId, Vec<T>)> {
        let mut out = Vec::with_capacity(self.bound.len());
        for node in &self.nodes {
            if let Op::Leaf { param: Some(pid) } = node.op {
                if let Some(g) = &node.grad {
                    out.push((pid, g.clone()));
                }
            }
        }
        out.sort_by_key(|(pid, _)| pid.0);
        out
    }

    /// True when every value in the node is finite.
    pub fn all_finite(&self, id: TensorId) -> bool {
        self.value(id).iter().all(|v| v.is_finite())
    }
}

fn diff_maybe_wrapped<T: Scalar>(p: T, t: T, wrap: bool) -> T {
    let d = p - t;
    if wrap {
        T::from_f64(crate::pose::wrap_angle_deg(d.to_f64()))
    } else {
        d
    }
}

fn ensure_grad<T: Scalar>(node: &mut Node<T>) -> &mut [T] {
    node.grad_mut()
}

fn matmul_acc<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize, out: &mut [T]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (l, &ail) in arow.iter().enumerate() {
            let brow = &b[l * m..(l + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += ail * bv;
            }
        }
    }
}
