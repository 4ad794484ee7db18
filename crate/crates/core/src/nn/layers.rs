//! Transformer building blocks. Each layer has a graph `forward` used for
//! training and, where decoding needs it, a plain-matrix `apply`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{attention_forward, AttnSegment, Graph, Mat, Var};
use super::params::{normal, uniform_fan_in, ParamId, ParamStore};

pub const LN_EPS: f64 = 1e-5;

/// Encoder or decoder stack dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackDims {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
}

impl StackDims {
    pub const TOY: StackDims = StackDims {
        layers: 2,
        hidden: 64,
        heads: 4,
    };

    pub fn validate(&self) -> crate::Result<()> {
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(crate::Error::Config(format!(
                "hidden width {} must be a positive multiple of heads {}",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

/// Packs sequence lengths into consecutive self-attention segments.
pub fn pack_segments(lengths: &[usize]) -> Vec<AttnSegment> {
    let mut start = 0;
    lengths
        .iter()
        .map(|&len| {
            let seg = AttnSegment::square(start, len);
            start += len;
            seg
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: store.add(format!("{name}.w"), uniform_fan_in(rng, input, output)),
            b: store.add(format!("{name}.b"), Mat::zeros((1, output))),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    pub fn apply(&self, store: &ParamStore, x: &Mat) -> Mat {
        x.dot(store.value(self.w)) + store.value(self.b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Mat::ones((1, width))),
            beta: store.add(format!("{name}.beta"), Mat::zeros((1, width))),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta, LN_EPS)
    }

    pub fn apply(&self, store: &ParamStore, x: &Mat) -> Mat {
        let n = x.ncols() as f64;
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
        }
        out * store.value(self.gamma) + store.value(self.beta)
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, rows: usize, width: usize, rng: &mut impl Rng) -> Self {
        Embedding {
            table: store.add(format!("{name}.table"), normal(rng, rows, width, 0.1)),
        }
    }

    pub fn forward(&self, g: &mut Graph, ids: Vec<usize>) -> Var {
        let t = g.param(self.table);
        g.gather_rows(t, ids)
    }

    pub fn apply(&self, store: &ParamStore, ids: &[usize]) -> Mat {
        let t = store.value(self.table);
        let mut out = Mat::zeros((ids.len(), t.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).assign(&t.row(id));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, rng: &mut impl Rng) -> Self {
        FeedForward {
            up: Linear::new(store, &format!("{name}.up"), width, 4 * width, rng),
            down: Linear::new(store, &format!("{name}.down"), 4 * width, width, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.up.forward(g, x);
        let h = g.gelu(h);
        self.down.forward(g, h)
    }

    pub fn apply(&self, store: &ParamStore, x: &Mat) -> Mat {
        let h = self.up.apply(store, x).mapv(super::graph_gelu);
        self.down.apply(store, &h)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, heads: usize, rng: &mut impl Rng) -> Self {
        MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), width, width, rng),
            k: Linear::new(store, &format!("{name}.k"), width, width, rng),
            v: Linear::new(store, &format!("{name}.v"), width, width, rng),
            o: Linear::new(store, &format!("{name}.o"), width, width, rng),
            heads,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        queries: Var,
        keys: Var,
        segments: Vec<AttnSegment>,
        causal: bool,
    ) -> Var {
        let q = self.q.forward(g, queries);
        let k = self.k.forward(g, keys);
        let v = self.v.forward(g, keys);
        let a = g.attention(q, k, v, segments, self.heads, causal);
        self.o.forward(g, a)
    }

    /// Attention of `queries` over precomputed key and value projections.
    pub fn apply_projected(
        &self,
        store: &ParamStore,
        queries: &Mat,
        k: &Mat,
        v: &Mat,
        segments: &[AttnSegment],
        causal: bool,
    ) -> Mat {
        let q = self.q.apply(store, queries);
        let (a, _) = attention_forward(&q, k, v, segments, self.heads, causal);
        self.o.apply(store, &a)
    }
}

/// Pre-norm encoder block: self-attention then feed-forward, each residual.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub ln_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln_ff: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, heads: usize, rng: &mut impl Rng) -> Self {
        EncoderLayer {
            ln_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), width),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), width, heads, rng),
            ln_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), width),
            ff: FeedForward::new(store, &format!("{name}.ff"), width, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, segments: &[AttnSegment]) -> Var {
        let h = self.ln_attn.forward(g, x);
        let a = self.attn.forward(g, h, h, segments.to_vec(), false);
        let x = g.add(x, a);
        let h = self.ln_ff.forward(g, x);
        let f = self.ff.forward(g, h);
        g.add(x, f)
    }
}

#[derive(Debug, Clone)]
pub struct EncoderStack {
    pub layers: Vec<EncoderLayer>,
    pub ln_final: LayerNorm,
}

impl EncoderStack {
    pub fn new(store: &mut ParamStore, name: &str, dims: StackDims, rng: &mut impl Rng) -> Self {
        EncoderStack {
            layers: (0..dims.layers)
                .map(|i| EncoderLayer::new(store, &format!("{name}.layer{i}"), dims.hidden, dims.heads, rng))
                .collect(),
            ln_final: LayerNorm::new(store, &format!("{name}.ln_final"), dims.hidden),
        }
    }

    pub fn forward(&self, g: &mut Graph, mut x: Var, segments: &[AttnSegment]) -> Var {
        for layer in &self.layers {
            x = layer.forward(g, x, segments);
        }
        self.ln_final.forward(g, x)
    }
}

/// Pre-norm decoder block: causal self-attention, cross-attention over the
/// encoder memory, feed-forward.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub ln_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub ln_cross: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub ln_ff: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, heads: usize, rng: &mut impl Rng) -> Self {
        DecoderLayer {
            ln_self: LayerNorm::new(store, &format!("{name}.ln_self"), width),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), width, heads, rng),
            ln_cross: LayerNorm::new(store, &format!("{name}.ln_cross"), width),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), width, heads, rng),
            ln_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), width),
            ff: FeedForward::new(store, &format!("{name}.ff"), width, rng),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        x: Var,
        memory: Var,
        self_segments: &[AttnSegment],
        cross_segments: &[AttnSegment],
    ) -> Var {
        let h = self.ln_self.forward(g, x);
        let a = self.self_attn.forward(g, h, h, self_segments.to_vec(), true);
        let x = g.add(x, a);
        let h = self.ln_cross.forward(g, x);
        let c = self.cross_attn.forward(g, h, memory, cross_segments.to_vec(), false);
        let x = g.add(x, c);
        let h = self.ln_ff.forward(g, x);
        let f = self.ff.forward(g, h);
        g.add(x, f)
    }
}

#[derive(Debug, Clone)]
pub struct DecoderStack {
    pub layers: Vec<DecoderLayer>,
    pub ln_final: LayerNorm,
}

impl DecoderStack {
    pub fn new(store: &mut ParamStore, name: &str, dims: StackDims, rng: &mut impl Rng) -> Self {
        DecoderStack {
            layers: (0..dims.layers)
                .map(|i| DecoderLayer::new(store, &format!("{name}.layer{i}"), dims.hidden, dims.heads, rng))
                .collect(),
            ln_final: LayerNorm::new(store, &format!("{name}.ln_final"), dims.hidden),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        mut x: Var,
        memory: Var,
        self_segments: &[AttnSegment],
        cross_segments: &[AttnSegment],
    ) -> Var {
        for layer in &self.layers {
            x = layer.forward(g, x, memory, self_segments, cross_segments);
        }
        self.ln_final.forward(g, x)
    }
}

/// Per-layer keys and values for incremental decoding of one sequence.
#[derive(Debug, Clone)]
pub struct DecoderCache {
    self_k: Vec<Mat>,
    self_v: Vec<Mat>,
    cross_k: Vec<Mat>,
    cross_v: Vec<Mat>,
}

impl DecoderCache {
    /// Number of decoder positions consumed so far.
    pub fn len(&self) -> usize {
        self.self_k.first().map_or(0, |k| k.nrows())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn append_row(m: &mut Mat, row: &Mat) {
    m.push_row(row.row(0)).expect("matching width");
}

impl DecoderStack {
    /// Projects the encoder memory once for every layer's cross-attention.
    pub fn start_cache(&self, store: &ParamStore, memory: &Mat) -> DecoderCache {
        let width = memory.ncols();
        let n = self.layers.len();
        DecoderCache {
            self_k: vec![Mat::zeros((0, width)); n],
            self_v: vec![Mat::zeros((0, width)); n],
            cross_k: self.layers.iter().map(|l| l.cross_attn.k.apply(store, memory)).collect(),
            cross_v: self.layers.iter().map(|l| l.cross_attn.v.apply(store, memory)).collect(),
        }
    }

    /// Consumes one embedded decoder row and returns its final hidden row.
    pub fn step(&self, store: &ParamStore, cache: &mut DecoderCache, x: &Mat) -> Mat {
        let mut x = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let h = layer.ln_self.apply(store, &x);
            append_row(&mut cache.self_k[i], &layer.self_attn.k.apply(store, &h));
            append_row(&mut cache.self_v[i], &layer.self_attn.v.apply(store, &h));
            let t = cache.self_k[i].nrows();
            let seg = [AttnSegment {
                q_start: 0,
                q_len: 1,
                k_start: 0,
                k_len: t,
                shared: None,
            }];
            x = x + layer.self_attn.apply_projected(store, &h, &cache.self_k[i], &cache.self_v[i], &seg, false);
            let h = layer.ln_cross.apply(store, &x);
            let m = cache.cross_k[i].nrows();
            let seg = [AttnSegment {
                q_start: 0,
                q_len: 1,
                k_start: 0,
                k_len: m,
                shared: None,
            }];
            x = x + layer.cross_attn.apply_projected(store, &h, &cache.cross_k[i], &cache.cross_v[i], &seg, false);
            let h = layer.ln_ff.apply(store, &x);
            x = x + layer.ff.apply(store, &h);
        }
        self.ln_final.apply(store, &x)
    }
}

/// One packed input sequence for [`TextEncoder`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncoderInput {
    pub ids: Vec<usize>,
    pub positions: Vec<usize>,
    pub segments: Vec<usize>,
    /// Attention layout with row offsets relative to this input; empty
    /// means full self-attention.
    pub attention: Vec<AttnSegment>,
}

impl EncoderInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Token + learned position + segment-type embeddings feeding an encoder
/// stack.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub tokens: Embedding,
    pub positions: Embedding,
    pub segments: Embedding,
    pub stack: EncoderStack,
    pub max_positions: usize,
}

impl TextEncoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        max_positions: usize,
        segment_types: usize,
        dims: StackDims,
        rng: &mut impl Rng,
    ) -> Self {
        TextEncoder {
            tokens: Embedding::new(store, &format!("{name}.tok"), vocab_size, dims.hidden, rng),
            positions: Embedding::new(store, &format!("{name}.pos"), max_positions, dims.hidden, rng),
            segments: Embedding::new(store, &format!("{name}.seg"), segment_types, dims.hidden, rng),
            stack: EncoderStack::new(store, name, dims, rng),
            max_positions,
        }
    }

    /// Embeds the packed inputs (without running the stack).
    pub fn embed(&self, g: &mut Graph, inputs: &[&EncoderInput]) -> Var {
        let ids: Vec<usize> = inputs.iter().flat_map(|i| i.ids.iter().copied()).collect();
        let pos: Vec<usize> = inputs.iter().flat_map(|i| i.positions.iter().copied()).collect();
        let seg: Vec<usize> = inputs.iter().flat_map(|i| i.segments.iter().copied()).collect();
        let t = self.tokens.forward(g, ids);
        let p = self.positions.forward(g, pos);
        let s = self.segments.forward(g, seg);
        let x = g.add(t, p);
        g.add(x, s)
    }

    /// Encodes packed inputs; returns the hidden rows and each input's
    /// starting row.
    pub fn forward(&self, g: &mut Graph, inputs: &[&EncoderInput]) -> (Var, Vec<usize>) {
        let lengths: Vec<usize> = inputs.iter().map(|i| i.len()).collect();
        let mut offsets = Vec::with_capacity(lengths.len());
        let mut acc = 0;
        for &l in &lengths {
            offsets.push(acc);
            acc += l;
        }
        let mut segs = Vec::new();
        for (input, &off) in inputs.iter().zip(&offsets) {
            if input.attention.is_empty() {
                segs.push(AttnSegment::square(off, input.len()));
            }
            for a in &input.attention {
                segs.push(AttnSegment {
                    q_start: a.q_start + off,
                    k_start: a.k_start + off,
                    shared: a.shared.map(|(s, l)| (s + off, l)),
                    ..*a
                });
            }
        }
        let x = self.embed(g, inputs);
        let h = self.stack.forward(g, x, &segs);
        (h, offsets)
    }
}
