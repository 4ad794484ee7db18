//! ArgSpan: detects factual spans in an argument and grounds each to one of
//! the candidate knowledge-base variables.
//!
//! The argument and its candidate variables are encoded in one pass
//! (`<s> argument </s> <var> v1 </s> <var> v2 </s> ...`). Position ids
//! restart inside every variable segment, so the encoder treats the
//! variables as an unordered set. Each variable's `<var>` row is reduced by
//! a fully connected layer; a learned pseudo-variable stands for `OTHERS`.
//! A biaffine layer scores every (variable, token) pair over B/I/O.

mod biaffine;
pub mod metrics;

use std::path::Path;

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use biaffine::Biaffine;
pub use metrics::{
    grounding_accuracy, grounding_counts, match_spans, span_counts, span_f1, Counts,
    SpanEvaluation, SpanMode, SpanReport,
};

use crate::corpus::{
    decode_bio, encode_bio, AnnotatedExample, BioTag, Channel, FactVariable, Grounding,
    KnowledgeBase, SpanLabeling, TokenizedText,
};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::layers::{EncoderInput, Linear, StackDims, TextEncoder};
use crate::nn::train::{fit, TrainSettings, TrainingLog};
use crate::nn::{normal, AttnSegment, Gradients, Graph, Mat, ParamId, ParamStore, Var};
use crate::vocab::{words, Vocab};

pub const MAX_VARIABLES: usize = 5;
const BOS: &str = "<s>";
const SEP: &str = "</s>";
const VAR: &str = "<var>";
pub const CHECKPOINT_KIND: &str = "argspan";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrounderConfig {
    pub encoder: StackDims,
    /// Width of variable and token representations entering the biaffine.
    pub reduced_dim: usize,
    pub train: TrainSettings,
    #[serde(default)]
    pub seed: Option<u64>,
    pub max_positions: usize,
}

impl Default for GrounderConfig {
    fn default() -> Self {
        GrounderConfig {
            encoder: StackDims::TOY,
            reduced_dim: 600,
            train: TrainSettings {
                learning_rate: 1e-5,
                batch_size: 32,
                max_steps: 2000,
                eval_every: 50,
                early_stop_patience: 5,
                grad_clip_norm: 1.0,
                stop_below: None,
            },
            seed: None,
            max_positions: 256,
        }
    }
}

impl GrounderConfig {
    /// Desk-scale settings: 32-wide reduction, faster learning rate.
    pub fn toy(seed: u64) -> Self {
        let mut c = GrounderConfig {
            reduced_dim: 32,
            seed: Some(seed),
            ..Default::default()
        };
        c.train.learning_rate = 1e-3;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.train.validate()?;
        if self.reduced_dim == 0 {
            return Err(Error::Config("reduced_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Inputs and gold labels for one grounding example.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingExample {
    pub argument: TokenizedText,
    pub variables: Vec<FactVariable>,
    pub gold: SpanLabeling,
}

impl GroundingExample {
    /// Resolves the example's variable ids against `kb`.
    pub fn from_annotated(ex: &AnnotatedExample, kb: &KnowledgeBase) -> Result<Self> {
        let variables = ex
            .variables
            .iter()
            .map(|id| {
                kb.get(id).cloned().ok_or_else(|| {
                    Error::validation(format!("example `{}` lists unknown variable `{id}`", ex.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroundingExample {
            argument: ex.argument.clone(),
            variables,
            gold: ex.spans.clone(),
        })
    }

    fn groundings(&self) -> Vec<Grounding> {
        channel_groundings(&self.variables)
    }
}

fn channel_groundings(vars: &[FactVariable]) -> Vec<Grounding> {
    vars.iter()
        .map(|v| Grounding::Variable(v.id.clone()))
        .chain(std::iter::once(Grounding::Others))
        .collect()
}

/// Per-channel logits and the decoded labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingPrediction {
    /// `(variables + 1) x tokens x 3`; the last channel is `OTHERS`.
    pub logits: Array3<f64>,
    pub labeling: SpanLabeling,
}

/// Encoder outputs for an argument and its variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEncoding {
    pub tokens: Mat,
    pub variables: Mat,
}

struct PairInput {
    input: EncoderInput,
    arg_len: usize,
    var_rows: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Net {
    encoder: TextEncoder,
    token_proj: Linear,
    var_reduce: Linear,
    others: ParamId,
    biaffine: Biaffine,
}

#[derive(Debug, Clone)]
pub struct ArgSpan {
    config: GrounderConfig,
    vocab: Vocab,
    store: ParamStore,
    net: Net,
}

impl ArgSpan {
    /// Randomly initialized model. Fails without a seed.
    pub fn new(config: GrounderConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let seed = config
            .seed
            .ok_or_else(|| Error::Untrained("grounder has neither a seed nor loaded weights".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.encoder.hidden;
        let r = config.reduced_dim;
        let net = Net {
            encoder: TextEncoder::new(
                &mut store,
                "encoder",
                vocab.len(),
                config.max_positions,
                2,
                config.encoder,
                &mut rng,
            ),
            token_proj: Linear::new(&mut store, "token_proj", d, r, &mut rng),
            var_reduce: Linear::new(&mut store, "var_reduce", d, r, &mut rng),
            others: store.add("others", normal(&mut rng, 1, r, 0.1)),
            biaffine: Biaffine::new(&mut store, "biaffine", r, 3, &mut rng),
        };
        Ok(ArgSpan {
            config,
            vocab,
            store,
            net,
        })
    }

    /// Vocabulary over the arguments and variable texts of `examples`.
    pub fn build_vocab(examples: &[GroundingExample]) -> Vocab {
        let mut all = Vec::new();
        for ex in examples {
            all.extend(ex.argument.tokens.iter().map(|t| t.to_lowercase()));
            for v in &ex.variables {
                all.extend(words(&v.text));
            }
        }
        Vocab::build(&[BOS, SEP, VAR], all.iter().map(String::as_str))
    }

    pub fn config(&self) -> &GrounderConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn biaffine(&self) -> &Biaffine {
        &self.net.biaffine
    }

    /// Zeroes the biaffine scorer so every tag is equally likely.
    pub fn zero_scorer(&mut self) {
        self.net.biaffine.zero(&mut self.store);
    }

    fn prepare(&self, argument: &TokenizedText, variables: &[FactVariable]) -> Result<PairInput> {
        if argument.is_empty() {
            return Err(Error::validation("argument has no tokens"));
        }
        if variables.is_empty() || variables.len() > MAX_VARIABLES {
            return Err(Error::validation(format!(
                "expected 1..={MAX_VARIABLES} variables, got {}",
                variables.len()
            )));
        }
        let mut input = EncoderInput::default();
        let push = |input: &mut EncoderInput, tok: &str, pos: usize, seg: usize| -> Result<()> {
            if pos >= self.config.max_positions {
                return Err(Error::validation(format!(
                    "segment longer than {} positions",
                    self.config.max_positions
                )));
            }
            input.ids.push(self.vocab.id(tok));
            input.positions.push(pos);
            input.segments.push(seg);
            Ok(())
        };
        push(&mut input, BOS, 0, 0)?;
        for (i, t) in argument.tokens.iter().enumerate() {
            push(&mut input, &t.to_lowercase(), i + 1, 0)?;
        }
        push(&mut input, SEP, argument.len() + 1, 0)?;
        let mut var_rows = Vec::with_capacity(variables.len());
        for v in variables {
            var_rows.push(input.len());
            push(&mut input, VAR, 0, 1)?;
            let ws = words(&v.text);
            for (i, w) in ws.iter().enumerate() {
                push(&mut input, w, i + 1, 1)?;
            }
            push(&mut input, SEP, ws.len() + 1, 1)?;
        }
        // The argument sees every variable; each variable sees the argument
        // and itself only, so variables stay distinguishable yet unordered.
        let arg_rows = argument.len() + 2;
        input.attention.push(AttnSegment::square(0, input.len()));
        input.attention[0].q_len = arg_rows;
        let mut bounds = var_rows.clone();
        bounds.push(input.len());
        for w in bounds.windows(2) {
            input.attention.push(AttnSegment {
                shared: Some((0, arg_rows)),
                ..AttnSegment::square(w[0], w[1] - w[0])
            });
        }
        Ok(PairInput {
            input,
            arg_len: argument.len(),
            var_rows,
        })
    }

    /// Graph forward over a batch; returns per-example `(C * T) x 3` logits.
    fn forward(&self, g: &mut Graph, batch: &[PairInput]) -> Vec<Var> {
        let inputs: Vec<&EncoderInput> = batch.iter().map(|b| &b.input).collect();
        let (h, offsets) = self.net.encoder.forward(g, &inputs);
        let others = g.param(self.net.others);
        batch
            .iter()
            .zip(offsets)
            .map(|(b, off)| {
                let tok_rows = g.gather_rows(h, (off + 1..off + 1 + b.arg_len).collect());
                let ut = self.net.token_proj.forward(g, tok_rows);
                let bos = g.gather_rows(h, b.var_rows.iter().map(|r| off + r).collect());
                let uv = self.net.var_reduce.forward(g, bos);
                let uv = g.concat_rows(vec![uv, others]);
                self.net.biaffine.forward(g, uv, ut)
            })
            .collect()
    }

    /// One vector per argument token and one `<var>` vector per variable.
    pub fn encode_pair(&self, argument: &TokenizedText, variables: &[FactVariable]) -> Result<PairEncoding> {
        let p = self.prepare(argument, variables)?;
        let mut g = Graph::new(&self.store);
        let (h, _) = self.net.encoder.forward(&mut g, &[&p.input]);
        let hv = g.value(h);
        let tokens = hv.slice(ndarray::s![1..1 + p.arg_len, ..]).to_owned();
        let mut vars = Mat::zeros((p.var_rows.len(), hv.ncols()));
        for (i, &r) in p.var_rows.iter().enumerate() {
            vars.row_mut(i).assign(&hv.row(r));
        }
        Ok(PairEncoding {
            tokens,
            variables: vars,
        })
    }

    /// Fully connected reduction of `<var>` vectors to `reduced_dim`.
    pub fn reduce_variable(&self, bos: &Mat) -> Result<Mat> {
        if bos.ncols() != self.config.encoder.hidden {
            return Err(Error::shape(format!(
                "variable vector width {} != encoder width {}",
                bos.ncols(),
                self.config.encoder.hidden
            )));
        }
        Ok(self.net.var_reduce.apply(&self.store, bos))
    }

    /// Scores encoder token vectors against reduced variable vectors; the
    /// `OTHERS` channel is appended last.
    pub fn biaffine_score(&self, token_reps: &Mat, reduced_vars: &Mat) -> Result<Array3<f64>> {
        if token_reps.ncols() != self.config.encoder.hidden {
            return Err(Error::shape(format!(
                "token width {} != encoder width {}",
                token_reps.ncols(),
                self.config.encoder.hidden
            )));
        }
        if reduced_vars.ncols() != self.config.reduced_dim {
            return Err(Error::shape(format!(
                "variable width {} != reduced_dim {}",
                reduced_vars.ncols(),
                self.config.reduced_dim
            )));
        }
        let mut g = Graph::new(&self.store);
        let t = g.constant(token_reps.clone());
        let ut = self.net.token_proj.forward(&mut g, t);
        let uv = g.constant(reduced_vars.clone());
        let others = g.param(self.net.others);
        let uv = g.concat_rows(vec![uv, others]);
        let logits = self.net.biaffine.forward(&mut g, uv, ut);
        Ok(to_channels(g.value(logits), reduced_vars.nrows() + 1, token_reps.nrows()))
    }

    pub fn ground(&self, argument: &TokenizedText, variables: &[FactVariable]) -> Result<GroundingPrediction> {
        let p = self.prepare(argument, variables)?;
        let mut g = Graph::new(&self.store);
        let logits = self.forward(&mut g, std::slice::from_ref(&p))[0];
        let logits = to_channels(g.value(logits), variables.len() + 1, argument.len());
        let labeling = decode_channels(&logits, &channel_groundings(variables));
        Ok(GroundingPrediction { logits, labeling })
    }

    fn targets(ex: &GroundingExample) -> Result<Vec<Option<usize>>> {
        let groundings = ex.groundings();
        for s in &ex.gold.spans {
            if !groundings.contains(&s.grounding) {
                return Err(Error::validation(format!(
                    "gold span grounded to `{}` which is not a candidate variable",
                    s.grounding.id()
                )));
            }
        }
        let mut out = Vec::with_capacity(groundings.len() * ex.argument.len());
        for gr in &groundings {
            let tags = encode_bio(&ex.gold, ex.argument.len(), &Channel::Grounding(gr.clone()))?;
            out.extend(tags.into_iter().map(|t| Some(t.index())));
        }
        Ok(out)
    }

    /// Mean token cross-entropy over `examples` and, optionally, its
    /// gradients.
    pub fn loss(&self, examples: &[GroundingExample], with_grads: bool) -> Result<(f64, Option<Gradients>)> {
        self.loss_with(&self.store, examples, with_grads)
    }

    fn loss_with(
        &self,
        store: &ParamStore,
        examples: &[GroundingExample],
        with_grads: bool,
    ) -> Result<(f64, Option<Gradients>)> {
        let mut inputs = Vec::with_capacity(examples.len());
        let mut targets = Vec::new();
        for ex in examples {
            inputs.push(self.prepare(&ex.argument, &ex.variables)?);
            targets.extend(Self::targets(ex)?);
        }
        let mut g = Graph::new(store);
        let logits = self.forward(&mut g, &inputs);
        let all = g.concat_rows(logits);
        let loss = g.cross_entropy(all, targets);
        let grads = with_grads.then(|| g.backward(loss));
        Ok((g.scalar(loss), grads))
    }

    /// Trains from scratch; `validation` defaults to the training set.
    pub fn train(
        train: &[GroundingExample],
        validation: &[GroundingExample],
        config: GrounderConfig,
    ) -> Result<(ArgSpan, TrainingLog)> {
        if train.is_empty() {
            return Err(Error::validation("grounder training corpus is empty"));
        }
        let vocab = Self::build_vocab(train);
        let mut model = ArgSpan::new(config, vocab)?;
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
                let batch: Vec<GroundingExample> = idx.iter().map(|&i| train[i].clone()).collect();
                let (l, g) = model.loss_with(store, &batch, true)?;
                Ok((l, g.expect("gradients requested")))
            },
            |store| batched_loss(val, settings.batch_size, |b| model.loss_with(store, b, false).map(|r| r.0)),
        );
        model.store = store;
        let log = log?;
        Ok((model, log))
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
            return Err(Error::Checkpoint(format!("expected an {CHECKPOINT_KIND} checkpoint, found `{}`", ck.kind)));
        }
        let mut config: GrounderConfig = serde_json::from_value(ck.config.clone())?;
        config.seed.get_or_insert(0);
        let vocab: Vocab = serde_json::from_value(ck.extra["vocab"].clone())?;
        let mut model = ArgSpan::new(config, vocab)?;
        ck.load_into(&mut model.store)?;
        Ok(model)
    }
}

/// Mean of per-batch losses weighted by batch size.
pub(crate) fn batched_loss<T>(
    items: &[T],
    batch_size: usize,
    mut f: impl FnMut(&[T]) -> Result<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in items.chunks(batch_size.max(1)) {
        total += f(chunk)? * chunk.len() as f64;
    }
    Ok(total / items.len().max(1) as f64)
}

fn to_channels(flat: &Mat, channels: usize, tokens: usize) -> Array3<f64> {
    Array3::from_shape_fn((channels, tokens, 3), |(c, t, k)| flat[[c * tokens + t, k]])
}

/// Argmax with ties resolved towards `O`, then `B`.
fn argmax_tag(logits: ndarray::ArrayView1<f64>) -> BioTag {
    let mut best = BioTag::O;
    for tag in [BioTag::B, BioTag::I] {
        if logits[tag.index()] > logits[best.index()] {
            best = tag;
        }
    }
    best
}

/// Per-channel argmax decoding. A token claimed (B or I) by several
/// channels goes to the channel with the highest non-O logit; the losers
/// see it as O. Each channel is then decoded leniently.
pub fn decode_channels(logits: &Array3<f64>, groundings: &[Grounding]) -> SpanLabeling {
    let (channels, tokens, _) = logits.dim();
    assert_eq!(channels, groundings.len());
    let mut tags = vec![vec![BioTag::O; tokens]; channels];
    for t in 0..tokens {
        let mut owner: Option<(usize, f64)> = None;
        for c in 0..channels {
            let row = logits.slice(ndarray::s![c, t, ..]);
            let tag = argmax_tag(row);
            if tag == BioTag::O {
                continue;
            }
            let score = row[BioTag::B.index()].max(row[BioTag::I.index()]);
            if owner.is_none_or(|(_, s)| score > s) {
                owner = Some((c, score));
            }
            tags[c][t] = tag;
        }
        for (c, channel) in tags.iter_mut().enumerate() {
            if owner.is_some_and(|(o, _)| o != c) {
                channel[t] = BioTag::O;
            }
        }
    }
    let spans = tags
        .iter()
        .zip(groundings)
        .flat_map(|(t, g)| decode_bio(t, g).spans)
        .collect();
    SpanLabeling { spans }.sorted()
}

#[cfg(test)]
mod tests;
