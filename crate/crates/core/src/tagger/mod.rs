//! ArgSpanScheme: factual-span detection and multi-label scheme
//! classification from the argument text alone.
//!
//! A shared encoder reads `<s> argument`. The span head is a linear layer
//! over token rows (single BIO channel, groundings left as `OTHERS`). The
//! scheme head is either *parallel* (linear layer over the mean-pooled
//! argument tokens) or *pipelined* (two self-attention layers over BOS and
//! the tokens outside factual spans, then a linear layer on BOS).

pub mod metrics;
pub mod split;

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{scheme_f1, SchemeCounts, SchemeF1};
pub use split::{topic_split, Split, SplitRatio};

use crate::corpus::{
    decode_bio, encode_bio, AnnotatedExample, ArgumentScheme, BioTag, Channel, Grounding,
    SpanLabeling, TokenizedText,
};
use crate::error::{Error, Result};
use crate::grounder::batched_loss;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::layers::{pack_segments, EncoderInput, EncoderStack, Linear, StackDims, TextEncoder};
use crate::nn::train::{fit, TrainSettings, TrainingLog};
use crate::nn::{Gradients, Graph, Mat, ParamStore, Var};
use crate::vocab::Vocab;

pub const CHECKPOINT_KIND: &str = "argspanscheme";
/// Fixed shape of the pipelined head's self-attention.
pub const PIPELINE_ATTENTION: StackDims = StackDims {
    layers: 2,
    hidden: 0,
    heads: 4,
};
const BOS: &str = "<s>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaggerVariant {
    Parallel,
    Pipelined,
}

impl TaggerVariant {
    pub fn name(self) -> &'static str {
        match self {
            TaggerVariant::Parallel => "parallel",
            TaggerVariant::Pipelined => "pipelined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeTaggerConfig {
    pub variant: TaggerVariant,
    pub encoder: StackDims,
    pub train: TrainSettings,
    pub scheme_decision_threshold: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    pub max_positions: usize,
}

impl SchemeTaggerConfig {
    pub fn new(variant: TaggerVariant) -> Self {
        SchemeTaggerConfig {
            variant,
            encoder: StackDims::TOY,
            train: TrainSettings {
                learning_rate: 1e-5,
                batch_size: 64,
                max_steps: 2000,
                eval_every: 50,
                early_stop_patience: 5,
                grad_clip_norm: 1.0,
                stop_below: None,
            },
            scheme_decision_threshold: 0.5,
            seed: None,
            max_positions: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.train.validate()?;
        if self.variant == TaggerVariant::Pipelined && !self.encoder.hidden.is_multiple_of(PIPELINE_ATTENTION.heads) {
            return Err(Error::Config(format!(
                "pipelined head needs a hidden width divisible by {}",
                PIPELINE_ATTENTION.heads
            )));
        }
        if !(0.0..=1.0).contains(&self.scheme_decision_threshold) {
            return Err(Error::Config("scheme_decision_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Scheme probabilities, the thresholded label set, and detected spans
/// (all grounded to `OTHERS`).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemePrediction {
    pub probabilities: [f64; ArgumentScheme::COUNT],
    pub labels: BTreeSet<ArgumentScheme>,
    pub spans: SpanLabeling,
}

/// Token participation in the pipelined head's self-attention; index 0 is
/// BOS, index `i + 1` is argument token `i`.
pub fn selective_mask(token_count: usize, spans: &SpanLabeling) -> Result<Vec<bool>> {
    spans.validate(token_count)?;
    let mut keep = vec![true; token_count + 1];
    for s in &spans.spans {
        for k in &mut keep[s.start + 1..s.end + 1] {
            *k = false;
        }
    }
    Ok(keep)
}

struct Batch {
    inputs: Vec<EncoderInput>,
    masks: Vec<Vec<bool>>,
    span_targets: Vec<Option<usize>>,
    scheme_targets: Mat,
}

#[derive(Debug, Clone)]
enum SchemeHead {
    Parallel(Linear),
    Pipelined { attention: EncoderStack, out: Linear },
}

#[derive(Debug, Clone)]
struct Net {
    encoder: TextEncoder,
    span_head: Linear,
    scheme_head: SchemeHead,
}

#[derive(Debug, Clone)]
pub struct ArgSpanScheme {
    config: SchemeTaggerConfig,
    vocab: Vocab,
    store: ParamStore,
    net: Net,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn argmax_tag(row: ndarray::ArrayView1<f64>) -> BioTag {
    let mut best = BioTag::O;
    for tag in [BioTag::B, BioTag::I] {
        if row[tag.index()] > row[best.index()] {
            best = tag;
        }
    }
    best
}

impl ArgSpanScheme {
    pub fn new(config: SchemeTaggerConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let seed = config
            .seed
            .ok_or_else(|| Error::Untrained("scheme tagger has neither a seed nor loaded weights".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.encoder.hidden;
        let encoder = TextEncoder::new(&mut store, "encoder", vocab.len(), config.max_positions, 1, config.encoder, &mut rng);
        let span_head = Linear::new(&mut store, "span_head", d, 3, &mut rng);
        let scheme_head = match config.variant {
            TaggerVariant::Parallel => {
                SchemeHead::Parallel(Linear::new(&mut store, "scheme_head", d, ArgumentScheme::COUNT, &mut rng))
            }
            TaggerVariant::Pipelined => SchemeHead::Pipelined {
                attention: EncoderStack::new(
                    &mut store,
                    "scheme_attention",
                    StackDims {
                        hidden: d,
                        ..PIPELINE_ATTENTION
                    },
                    &mut rng,
                ),
                out: Linear::new(&mut store, "scheme_head", d, ArgumentScheme::COUNT, &mut rng),
            },
        };
        Ok(ArgSpanScheme {
            config,
            vocab,
            store,
            net: Net {
                encoder,
                span_head,
                scheme_head,
            },
        })
    }

    pub fn build_vocab(examples: &[AnnotatedExample]) -> Vocab {
        let all: Vec<String> = examples
            .iter()
            .flat_map(|e| e.argument.tokens.iter().map(|t| t.to_lowercase()))
            .collect();
        Vocab::build(&[BOS], all.iter().map(String::as_str))
    }

    pub fn config(&self) -> &SchemeTaggerConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Zeroes the scheme classifier's output layer.
    pub fn zero_scheme_classifier(&mut self) {
        let out = match &self.net.scheme_head {
            SchemeHead::Parallel(l) => l,
            SchemeHead::Pipelined { out, .. } => out,
        };
        self.store.value_mut(out.w).fill(0.0);
        self.store.value_mut(out.b).fill(0.0);
    }

    /// Names of the scheme head's parameters.
    pub fn scheme_head_params(&self) -> Vec<String> {
        self.store
            .ids()
            .map(|id| self.store.name(id).to_string())
            .filter(|n| n.starts_with("scheme_"))
            .collect()
    }

    fn prepare(&self, argument: &TokenizedText) -> Result<EncoderInput> {
        if argument.is_empty() {
            return Err(Error::validation("argument has no tokens"));
        }
        if argument.len() + 1 > self.config.max_positions {
            return Err(Error::validation(format!(
                "argument longer than {} positions",
                self.config.max_positions - 1
            )));
        }
        let ids = std::iter::once(self.vocab.id(BOS))
            .chain(argument.tokens.iter().map(|t| self.vocab.id(&t.to_lowercase())))
            .collect::<Vec<_>>();
        Ok(EncoderInput {
            positions: (0..ids.len()).collect(),
            segments: vec![0; ids.len()],
            ids,
            attention: Vec::new(),
        })
    }

    /// Span logits (`tokens x 3`) and scheme logits (`batch x 6`) for a
    /// batch; `masks` are the pipelined participation masks.
    fn forward(&self, g: &mut Graph, inputs: &[EncoderInput], masks: &[Vec<bool>]) -> (Vec<Var>, Var) {
        let refs: Vec<&EncoderInput> = inputs.iter().collect();
        let (h, offsets) = self.net.encoder.forward(g, &refs);
        let span_logits = inputs
            .iter()
            .zip(&offsets)
            .map(|(inp, &off)| {
                let rows = g.gather_rows(h, (off + 1..off + inp.len()).collect());
                self.net.span_head.forward(g, rows)
            })
            .collect();
        let scheme_logits = self.scheme_logits_graph(g, h, &offsets, inputs, masks);
        (span_logits, scheme_logits)
    }

    fn scheme_logits_graph(
        &self,
        g: &mut Graph,
        h: Var,
        offsets: &[usize],
        inputs: &[EncoderInput],
        masks: &[Vec<bool>],
    ) -> Var {
        match &self.net.scheme_head {
            SchemeHead::Parallel(lin) => {
                let pooled: Vec<Var> = inputs
                    .iter()
                    .zip(offsets)
                    .map(|(inp, &off)| {
                        let rows = g.gather_rows(h, (off + 1..off + inp.len()).collect());
                        g.mean_rows(rows)
                    })
                    .collect();
                let pooled = g.concat_rows(pooled);
                lin.forward(g, pooled)
            }
            SchemeHead::Pipelined { attention, out } => {
                let mut rows = Vec::new();
                let mut lengths = Vec::new();
                for (mask, &off) in masks.iter().zip(offsets) {
                    let kept: Vec<usize> = mask.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| off + i).collect();
                    lengths.push(kept.len());
                    rows.extend(kept);
                }
                let x = g.gather_rows(h, rows);
                let y = attention.forward(g, x, &pack_segments(&lengths));
                let mut bos = Vec::with_capacity(lengths.len());
                let mut acc = 0;
                for l in lengths {
                    bos.push(acc);
                    acc += l;
                }
                let bos = g.gather_rows(y, bos);
                out.forward(g, bos)
            }
        }
    }

    /// Encoder output rows for `<s> argument` (row 0 is BOS).
    pub fn encode(&self, argument: &TokenizedText) -> Result<Mat> {
        let input = self.prepare(argument)?;
        let mut g = Graph::new(&self.store);
        let (h, _) = self.net.encoder.forward(&mut g, &[&input]);
        Ok(g.value(h).clone())
    }

    /// Scheme logits from fixed encoder outputs. `spans` are only used by
    /// the pipelined head.
    pub fn scheme_logits_from_encoding(&self, encoding: &Mat, spans: &SpanLabeling) -> Result<[f64; ArgumentScheme::COUNT]> {
        if encoding.nrows() < 2 || encoding.ncols() != self.config.encoder.hidden {
            return Err(Error::shape(format!("encoding of shape {:?}", encoding.dim())));
        }
        let tokens = encoding.nrows() - 1;
        let mask = selective_mask(tokens, spans)?;
        let input = EncoderInput {
            ids: vec![0; encoding.nrows()],
            ..Default::default()
        };
        let mut g = Graph::new(&self.store);
        let h = g.constant(encoding.clone());
        let logits = self.scheme_logits_graph(&mut g, h, &[0], &[input], &[mask]);
        let v = g.value(logits);
        Ok(std::array::from_fn(|k| v[[0, k]]))
    }

    /// Span-head logits, `tokens x 3`.
    pub fn span_logits(&self, argument: &TokenizedText) -> Result<Mat> {
        let h = self.encode(argument)?;
        let rows = h.slice(ndarray::s![1.., ..]).to_owned();
        Ok(self.net.span_head.apply(&self.store, &rows))
    }

    pub fn predict_spans(&self, argument: &TokenizedText) -> Result<SpanLabeling> {
        Ok(decode_span_logits(&self.span_logits(argument)?))
    }

    /// Full prediction; the pipelined head masks the predicted spans.
    pub fn predict(&self, argument: &TokenizedText) -> Result<SchemePrediction> {
        let h = self.encode(argument)?;
        let rows = h.slice(ndarray::s![1.., ..]).to_owned();
        let spans = decode_span_logits(&self.net.span_head.apply(&self.store, &rows));
        let logits = self.scheme_logits_from_encoding(&h, &spans)?;
        let probabilities = logits.map(sigmoid);
        let labels = ArgumentScheme::ALL
            .iter()
            .copied()
            .filter(|s| probabilities[s.index()] >= self.config.scheme_decision_threshold)
            .collect();
        Ok(SchemePrediction {
            probabilities,
            labels,
            spans,
        })
    }

    /// Span cross-entropy plus scheme binary cross-entropy. The pipelined
    /// head masks gold spans.
    pub fn loss(&self, examples: &[AnnotatedExample], with_grads: bool) -> Result<(f64, Option<Gradients>)> {
        self.loss_with(&self.store, examples, with_grads)
    }

    fn batch(&self, examples: &[AnnotatedExample]) -> Result<Batch> {
        let mut batch = Batch {
            inputs: Vec::with_capacity(examples.len()),
            masks: Vec::with_capacity(examples.len()),
            span_targets: Vec::new(),
            scheme_targets: Mat::zeros((examples.len(), ArgumentScheme::COUNT)),
        };
        for (i, ex) in examples.iter().enumerate() {
            batch.inputs.push(self.prepare(&ex.argument)?);
            batch.masks.push(selective_mask(ex.argument.len(), &ex.spans)?);
            let tags = encode_bio(&ex.spans, ex.argument.len(), &Channel::All)?;
            batch.span_targets.extend(tags.into_iter().map(|t| Some(t.index())));
            for s in &ex.schemes {
                batch.scheme_targets[[i, s.index()]] = 1.0;
            }
        }
        Ok(batch)
    }

    /// Builds the span and scheme loss nodes.
    fn loss_nodes(&self, g: &mut Graph, batch: Batch) -> (Var, Var) {
        let (span_logits, scheme_logits) = self.forward(g, &batch.inputs, &batch.masks);
        let span_logits = g.concat_rows(span_logits);
        let span_loss = g.cross_entropy(span_logits, batch.span_targets);
        let scheme_loss = g.bce_with_logits(scheme_logits, batch.scheme_targets);
        (span_loss, scheme_loss)
    }

    fn loss_with(
        &self,
        store: &ParamStore,
        examples: &[AnnotatedExample],
        with_grads: bool,
    ) -> Result<(f64, Option<Gradients>)> {
        let batch = self.batch(examples)?;
        let mut g = Graph::new(store);
        let (a, b) = self.loss_nodes(&mut g, batch);
        let loss = g.add(a, b);
        let grads = with_grads.then(|| g.backward(loss));
        Ok((g.scalar(loss), grads))
    }

    /// Span and scheme loss terms, reported separately.
    pub fn loss_terms(&self, examples: &[AnnotatedExample]) -> Result<(f64, f64)> {
        let batch = self.batch(examples)?;
        let mut g = Graph::new(&self.store);
        let (a, b) = self.loss_nodes(&mut g, batch);
        Ok((g.scalar(a), g.scalar(b)))
    }

    pub fn train(
        train: &[AnnotatedExample],
        validation: &[AnnotatedExample],
        config: SchemeTaggerConfig,
    ) -> Result<(ArgSpanScheme, TrainingLog)> {
        if train.is_empty() {
            return Err(Error::validation("scheme tagger training corpus is empty"));
        }
        let mut model = ArgSpanScheme::new(config, Self::build_vocab(train))?;
        let val = if validation.is_empty() { train } else { validation };
        let settings = model.config.train;
        let seed = model.config.seed.unwrap_or_default();
        let mut store = std::mem::take(&mut model.store);
        let log = fit(
            &mut store,
            train.len(),
            &settings,
            seed,
            |store, idx| {
                let batch: Vec<AnnotatedExample> = idx.iter().map(|&i| train[i].clone()).collect();
                let (l, g) = model.loss_with(store, &batch, true)?;
                Ok((l, g.expect("gradients requested")))
            },
            |store| batched_loss(val, settings.batch_size, |b| model.loss_with(store, b, false).map(|r| r.0)),
        );
        model.store = store;
        Ok((model, log?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            config: serde_json::to_value(&self.config)?,
            extra: serde_json::json!({ "vocab": self.vocab }),
            params: self.store.clone(),
        }
        .save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!(
                "expected an {CHECKPOINT_KIND} checkpoint, found `{}`",
                ck.kind
            )));
        }
        let mut config: SchemeTaggerConfig = serde_json::from_value(ck.config.clone())?;
        config.seed.get_or_insert(0);
        let vocab: Vocab = serde_json::from_value(ck.extra["vocab"].clone())?;
        let mut model = ArgSpanScheme::new(config, vocab)?;
        ck.load_into(&mut model.store)?;
        Ok(model)
    }
}

/// Argmax per token (ties prefer O) then lenient BIO decoding.
pub fn decode_span_logits(logits: &Mat) -> SpanLabeling {
    let tags: Vec<BioTag> = logits.rows().into_iter().map(argmax_tag).collect();
    decode_bio(&tags, &Grounding::Others)
}

/// Lowercased tokens of `argument` that participate in the pipelined head.
pub fn unmasked_tokens(argument: &TokenizedText, spans: &SpanLabeling) -> Result<Vec<String>> {
    let mask = selective_mask(argument.len(), spans)?;
    Ok(argument
        .tokens
        .iter()
        .zip(&mask[1..])
        .filter(|(_, &k)| k)
        .map(|(t, _)| t.to_lowercase())
        .collect())
}

#[cfg(test)]
mod tests;
