//! Trainable parameter store and the neural building blocks used by the
//! navigation heads: linear layers, multi-head attention, residual attention
//! blocks, and the two-layer GELU MLP decoder.

use super::graph::{Graph, TensorId};
use super::scalar::Scalar;
use crate::rng::SplitMix64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("model width {width} is not divisible by {heads} attention heads")]
    HeadMismatch { width: usize, heads: usize },
    #[error("step {step} outside schedule of {total} total steps")]
    ScheduleRange { step: u64, total: u64 },
    #[error("gradient for unknown parameter id {0}")]
    UnknownParam(usize),
    #[error("gradient length {got} does not match parameter length {want}")]
    GradLength { got: usize, want: usize },
}

/// Handle into a [`Parameters`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    /// Dense position within the owning store, in allocation order.
    pub fn index(self) -> usize {
        self.0
    }

    pub fn from_index(index: usize) -> Self {
        ParamId(index)
    }
}

/// One named tensor with AdamW moment state.
pub struct ParamEntry<T: Scalar> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

/// Flat store of all parameters owned by one model.
pub struct Parameters<T: Scalar> {
    entries: Vec<ParamEntry<T>>,
    store_id: u64,
}

impl<T: Scalar> Default for Parameters<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Parameters<T> {
    pub fn new() -> Self {
        use std::sync::atomic::{AtomicU64, Ordering};
        static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(0);
        Parameters {
            entries: Vec::new(),
            store_id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
        }
    }

    /// Process-unique identity; distinguishes stores bound into one graph.
    pub fn store_id(&self) -> u64 {
        self.store_id
    }

    /// Allocate a tensor initialized uniformly in +/- 1/sqrt(fan_in).
    ///
    /// The init stream is keyed by (seed, name), so layout changes elsewhere
    /// in the model never perturb an existing layer's initialization.
    pub fn alloc(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        fan_in: usize,
        seed: u64,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut rng = SplitMix64::from_parts(&[seed, name_key(name)]);
        let value = (0..rows * cols)
            .map(|_| T::from_f64(rng.uniform(-bound, bound)))
            .collect();
        self.push(name, rows, cols, value)
    }

    /// Allocate with explicit values (tests, checkpoint loading).
    pub fn alloc_init(&mut self, name: &str, rows: usize, cols: usize, values: &[f64]) -> ParamId {
        assert_eq!(values.len(), rows * cols);
        let value = values.iter().map(|&x| T::from_f64(x)).collect();
        self.push(name, rows, cols, value)
    }

    fn push(&mut self, name: &str, rows: usize, cols: usize, value: Vec<T>) -> ParamId {
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(ParamEntry {
            name: name.to_string(),
            rows,
            cols,
            value,
            m: vec![T::ZERO; rows * cols],
            v: vec![T::ZERO; rows * cols],
            step: 0,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn entry_mut(&mut self, id: ParamId) -> &mut ParamEntry<T> {
        &mut self.entries[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry<T>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut ParamEntry<T>)> {
        self.entries
            .iter_mut()
            .enumerate()
            .map(|(i, e)| (ParamId(i), e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }
}

fn name_key(name: &str) -> u64 {
    // FNV-1a; stable across runs and platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Fully-connected layer y = x W + b.
#[derive(Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(
        params: &mut Parameters<T>,
        name: &str,
        input: usize,
        output: usize,
        seed: u64,
    ) -> Self {
        Linear {
            w: params.alloc(&format!("{name}.w"), input, output, input, seed),
            b: params.alloc(&format!("{name}.b"), 1, output, input, seed),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        params: &Parameters<T>,
        x: TensorId,
    ) -> TensorId {
        let w = g.param(params, self.w);
        let b = g.param(params, self.b);
        let xw = g.matmul(x, w);
        g.add_bias(xw, b)
    }
}

/// Standard multi-head scaled dot-product attention with learned Q/K/V/output
/// projections. No positional information is added here; set semantics are
/// the caller's responsibility.
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub width: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(
        params: &mut Parameters<T>,
        name: &str,
        width: usize,
        heads: usize,
        seed: u64,
    ) -> Result<Self, TensorError> {
        if heads == 0 || width % heads != 0 {
            return Err(TensorError::HeadMismatch { width, heads });
        }
        Ok(MultiHeadAttention {
            wq: Linear::new(params, &format!("{name}.q"), width, width, seed),
            wk: Linear::new(params, &format!("{name}.k"), width, width, seed),
            wv: Linear::new(params, &format!("{name}.v"), width, width, seed),
            wo: Linear::new(params, &format!("{name}.o"), width, width, seed),
            heads,
            width,
        })
    }

    /// Attention of `query` [nq, C] over `keys_values` [nk, C] -> [nq, C].
    /// Self-attention is the case where both arguments are the same node.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        params: &Parameters<T>,
        query: TensorId,
        keys_values: TensorId,
    ) -> TensorId {
        let q = self.wq.forward(g, params, query);
        let k = self.wk.forward(g, params, keys_values);
        let v = self.wv.forward(g, params, keys_values);
        let dh = self.width / self.heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = g.slice_cols(q, lo, hi);
            let kh = g.slice_cols(k, lo, hi);
            let vh = g.slice_cols(v, lo, hi);
            let kt = g.transpose(kh);
            let logits = g.matmul(qh, kt);
            let scaled = g.scale(logits, scale);
            let weights = g.softmax_rows(scaled);
            outs.push(g.matmul(weights, vh));
        }
        let cat = g.concat_cols(&outs);
        self.wo.forward(g, params, cat)
    }
}

/// Attention sublayer with a residual connection: `x + MHA(x)`, or the
/// cross variant `q + MHA(q, kv)`. When `prenorm` is set the attention input
/// is layer-normalized first (flag, off by default).
pub struct AttentionBlock {
    pub attn: MultiHeadAttention,
    pub prenorm: bool,
}

impl AttentionBlock {
    pub fn new<T: Scalar>(
        params: &mut Parameters<T>,
        name: &str,
        width: usize,
        heads: usize,
        prenorm: bool,
        seed: u64,
    ) -> Result<Self, TensorError> {
        Ok(AttentionBlock {
            attn: MultiHeadAttention::new(params, name, width, heads, seed)?,
            prenorm,
        })
    }

    pub fn forward_self<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        params: &Parameters<T>,
        x: TensorId,
    ) -> TensorId {
        let inner = if self.prenorm { g.layer_norm_rows(x) } else { x };
        let out = self.attn.forward(g, params, inner, inner);
        g.add(x, out)
    }

    pub fn forward_cross<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        params: &Parameters<T>,
        q: TensorId,
        kv: TensorId,
    ) -> TensorId {
        let (qi, kvi) = if self.prenorm {
            (g.layer_norm_rows(q), g.layer_norm_rows(kv))
        } else {
            (q, kv)
        };
        let out = self.attn.forward(g, params, qi, kvi);
        g.add(q, out)
    }
}

/// Two-layer MLP with GELU in between (the per-view action decoder shape).
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    pub fn new<T: Scalar>(
        params: &mut Parameters<T>,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        seed: u64,
    ) -> Self {
        Mlp {
            l1: Linear::new(params, &format!("{name}.l1"), input, hidden, seed),
            l2: Linear::new(params, &format!("{name}.l2"), hidden, output, seed),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        params: &Parameters<T>,
        x: TensorId,
    ) -> TensorId {
        let h = self.l1.forward(g, params, x);
        let h = g.gelu(h);
        self.l2.forward(g, params, h)
    }
}

/// Sinusoidal positional encoding table, `len` rows of dimension `dim`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let rate = 1.0 / 10_000f64.powf(2.0 * pair / dim as f64);
            let angle = pos as f64 * rate;
            out[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}
