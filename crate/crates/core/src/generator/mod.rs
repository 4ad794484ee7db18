//! ArgU: control-coded encoder-decoder argument generation.
//!
//! The encoder reads the topic and the fact variables; the decoder is
//! primed with control codes. Mono and the ablations decode the argument
//! directly. Dual first decodes a template over `<VAR_X>` placeholders,
//! then decodes the argument from the template followed by `<argument>`.

mod beam;
mod tokens;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use beam::{beam_search, has_repeated_trigram, repeats_trigram, BeamConfig, BeamResult};
pub use tokens::{
    build_control_prefix, detokenize, placeholder_index, substitute_template, template_flags,
    tokenize_with_specials, variable_token, EncoderInput, Phase, Variant, ARGUMENT, EOS, MAX_VARIABLES,
    PATTERN, SPECIAL_TOKENS,
};

use crate::corpus::{AnnotatedExample, ArgumentScheme, Grounding, KnowledgeBase, Stance};
use crate::error::{Error, Result};
use crate::grounder::batched_loss;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::layers::{
    pack_segments, DecoderCache, DecoderStack, Embedding, EncoderInput as PackedInput, Linear, StackDims,
    TextEncoder,
};
use crate::nn::train::{fit, TrainSettings, TrainingLog};
use crate::nn::{log_softmax, AttnSegment, Gradients, Graph, Mat, ParamStore, Var};
use crate::vocab::Vocab;

pub const CHECKPOINT_KIND: &str = "argu";

/// Seed for a named sub-task, stable across runs and platforms.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub variant: Variant,
    pub encoder: StackDims,
    pub decoder: StackDims,
    pub train: TrainSettings,
    pub beam: BeamConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    pub max_positions: usize,
}

impl GeneratorConfig {
    pub fn new(variant: Variant) -> Self {
        GeneratorConfig {
            variant,
            encoder: StackDims::TOY,
            decoder: StackDims::TOY,
            train: TrainSettings {
                learning_rate: 1e-5,
                batch_size: 24,
                max_steps: 2000,
                eval_every: 50,
                early_stop_patience: 5,
                grad_clip_norm: 1.0,
                stop_below: None,
            },
            beam: BeamConfig::default(),
            seed: None,
            max_positions: 160,
        }
    }

    /// Toy dimensions with a learning rate suited to training from scratch.
    pub fn toy(variant: Variant, seed: u64) -> Self {
        let mut c = GeneratorConfig::new(variant);
        c.seed = Some(seed);
        c.train.learning_rate = 1e-3;
        c.train.batch_size = 32;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        self.train.validate()?;
        if self.encoder.hidden != self.decoder.hidden {
            return Err(Error::Config("encoder and decoder widths differ".into()));
        }
        if self.beam.beam_width == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        // phase-two context holds a full template, `<argument>`, and the argument
        if self.max_positions < 2 * self.beam.max_length + 4 {
            return Err(Error::Config(format!(
                "max_positions {} too small for max_length {}",
                self.max_positions, self.beam.max_length
            )));
        }
        Ok(())
    }
}

/// One supervised generation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorExample {
    pub id: String,
    pub input: EncoderInput,
    pub stance: Stance,
    pub scheme: Option<ArgumentScheme>,
    /// Template tokens over `<VAR_X>` placeholders, when spans are grounded.
    pub template: Option<Vec<String>>,
    pub argument: Vec<String>,
}

impl GeneratorExample {
    /// Builds a row from an annotated example. Variables are ordered by a
    /// permutation seeded from `seed` and the example id.
    pub fn from_annotated(ex: &AnnotatedExample, kb: &KnowledgeBase, seed: u64) -> Result<Self> {
        let texts = ex
            .variables
            .iter()
            .map(|id| {
                kb.get(id)
                    .map(|v| v.text.clone())
                    .ok_or_else(|| Error::validation(format!("example `{}` lists unknown variable `{id}`", ex.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let input = EncoderInput::build(&ex.topic, &texts, derive_seed(seed, &ex.id))
            .map_err(|e| Error::validation(format!("example `{}`: {e}", ex.id)))?;
        Ok(GeneratorExample {
            id: ex.id.clone(),
            template: derive_template(ex, &input),
            stance: ex.stance,
            scheme: ex.primary_scheme(),
            argument: ex.argument.tokens.iter().map(|t| t.to_lowercase()).collect(),
            input,
        })
    }
}

/// Argument tokens with every span grounded to a listed variable replaced
/// by that variable's `<VAR_X>`; `None` when no span is so grounded.
pub fn derive_template(ex: &AnnotatedExample, input: &EncoderInput) -> Option<Vec<String>> {
    let mut out = Vec::new();
    let mut any = false;
    let mut t = 0;
    let mut spans = ex.spans.spans.iter().peekable();
    while t < ex.argument.tokens.len() {
        if let Some(span) = spans.peek().filter(|s| s.start == t) {
            let pos = match &span.grounding {
                Grounding::Variable(id) => ex.variables.iter().position(|v| v == id).and_then(|i| input.position_of(i)),
                Grounding::Others => None,
            };
            if let Some(x) = pos {
                out.push(variable_token(x).to_string());
                any = true;
                t = span.end;
                spans.next();
                continue;
            }
            spans.next();
        }
        out.push(ex.argument.tokens[t].to_lowercase());
        t += 1;
    }
    any.then_some(out)
}

/// A generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub topic: String,
    pub variables: Vec<String>,
    pub stance: Option<Stance>,
    pub scheme: Option<ArgumentScheme>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub encoder_input: EncoderInput,
    pub variant: Variant,
    pub stance: Option<Stance>,
    pub scheme: Option<ArgumentScheme>,
    pub control_prefix: Vec<String>,
    pub template: Option<Vec<String>>,
    /// Dual only: the decoder context used for the argument phase.
    pub phase2_context: Option<Vec<String>>,
    pub argument: Vec<String>,
    pub template_score: Option<f64>,
    pub argument_score: f64,
    /// Template placeholders naming no supplied variable.
    pub unknown_placeholders: Vec<String>,
    /// Encoder positions of supplied variables the template never uses.
    pub omitted_variables: Vec<usize>,
}

impl GenerationRecord {
    pub fn argument_text(&self) -> String {
        detokenize(&self.argument)
    }

    pub fn template_text(&self) -> Option<String> {
        self.template.as_deref().map(detokenize)
    }
}

/// Result of two-phase decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct DualOutput {
    pub template: Vec<String>,
    pub template_score: f64,
    pub phase2_context: Vec<String>,
    pub argument: Vec<String>,
    pub argument_score: f64,
}

#[derive(Debug, Clone)]
struct Net {
    encoder: TextEncoder,
    dec_tokens: Embedding,
    dec_positions: Embedding,
    decoder: DecoderStack,
    out: Linear,
}

/// A decoder sequence: the model reads `tokens[..n-1]` and is scored on
/// predicting `tokens[j]` for every `j >= loss_from`.
#[derive(Debug, Clone, PartialEq)]
struct DecoderSeq {
    tokens: Vec<usize>,
    loss_from: usize,
}

#[derive(Debug, Clone)]
pub struct ArgU {
    config: GeneratorConfig,
    vocab: Vocab,
    store: ParamStore,
    net: Net,
    trained: bool,
}

/// Incremental decoder state for one hypothesis.
#[derive(Debug, Clone)]
struct DecState {
    cache: DecoderCache,
}

impl ArgU {
    pub fn new(config: GeneratorConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let seed = config
            .seed
            .ok_or_else(|| Error::Untrained("generator has neither a seed nor loaded weights".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.decoder.hidden;
        let net = Net {
            encoder: TextEncoder::new(&mut store, "encoder", vocab.len(), config.max_positions, 1, config.encoder, &mut rng),
            dec_tokens: Embedding::new(&mut store, "decoder.tok", vocab.len(), d, &mut rng),
            dec_positions: Embedding::new(&mut store, "decoder.pos", config.max_positions, d, &mut rng),
            decoder: DecoderStack::new(&mut store, "decoder", config.decoder, &mut rng),
            out: Linear::new(&mut store, "lm_head", d, vocab.len(), &mut rng),
        };
        Ok(ArgU {
            config,
            vocab,
            store,
            net,
            trained: false,
        })
    }

    /// Special tokens first, then every word of the inputs, templates and
    /// arguments.
    pub fn build_vocab(examples: &[GeneratorExample]) -> Vocab {
        let mut words = Vec::new();
        for ex in examples {
            words.extend(ex.input.tokens());
            words.extend(ex.argument.iter().cloned());
            if let Some(t) = &ex.template {
                words.extend(t.iter().cloned());
            }
        }
        let mut specials: Vec<&str> = SPECIAL_TOKENS.to_vec();
        specials.push(EOS);
        words.retain(|w| !specials.contains(&w.as_str()));
        Vocab::build(&specials, words.iter().map(String::as_str))
    }

    pub fn config(&self) -> &GeneratorConfig {
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

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Allows decoding with the current (possibly random) weights.
    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Zeroes the output projection so every token is equally likely.
    pub fn zero_output_layer(&mut self) {
        self.store.value_mut(self.net.out.w).fill(0.0);
        self.store.value_mut(self.net.out.b).fill(0.0);
    }

    fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.id(t)).collect()
    }

    fn packed_input(&self, input: &EncoderInput) -> Result<PackedInput> {
        let ids = self.ids(&input.tokens());
        if ids.len() > self.config.max_positions {
            return Err(Error::validation(format!(
                "encoder input longer than {} tokens",
                self.config.max_positions
            )));
        }
        Ok(PackedInput {
            positions: (0..ids.len()).collect(),
            segments: vec![0; ids.len()],
            ids,
            attention: Vec::new(),
        })
    }

    fn sequences(&self, ex: &GeneratorExample) -> Result<Vec<DecoderSeq>> {
        let variant = self.config.variant;
        let eos = self.vocab.id(EOS);
        let argument = self.ids(&ex.argument);
        let seqs = if variant == Variant::Dual {
            let template = ex.template.as_ref().ok_or_else(|| {
                Error::validation(format!(
                    "example `{}` has no grounded spans, so no template can be built",
                    ex.id
                ))
            })?;
            let prefix = build_control_prefix(variant, Some(ex.stance), ex.scheme, Phase::First, None)?;
            let phase2 = build_control_prefix(variant, None, None, Phase::Second, Some(template))?;
            let mut first = self.ids(&prefix);
            first.extend(self.ids(template));
            first.push(self.vocab.id(ARGUMENT));
            let mut second = self.ids(&phase2);
            second.extend(&argument);
            second.push(eos);
            vec![
                DecoderSeq {
                    tokens: first,
                    loss_from: prefix.len(),
                },
                DecoderSeq {
                    tokens: second,
                    loss_from: phase2.len(),
                },
            ]
        } else {
            let prefix = build_control_prefix(variant, Some(ex.stance), ex.scheme, Phase::First, None)?;
            let mut tokens = self.ids(&prefix);
            tokens.extend(&argument);
            tokens.push(eos);
            vec![DecoderSeq {
                tokens,
                loss_from: prefix.len(),
            }]
        };
        for s in &seqs {
            if s.tokens.len() > self.config.max_positions {
                return Err(Error::validation(format!(
                    "example `{}` needs {} decoder positions, limit is {}",
                    ex.id,
                    s.tokens.len(),
                    self.config.max_positions
                )));
            }
        }
        Ok(seqs)
    }

    /// Packed forward over examples: returns logits for every decoder input
    /// row and the matching targets.
    fn forward(&self, g: &mut Graph, examples: &[GeneratorExample]) -> Result<(Var, Vec<Option<usize>>)> {
        let mut enc_inputs = Vec::with_capacity(examples.len());
        let mut seqs = Vec::new();
        for (i, ex) in examples.iter().enumerate() {
            enc_inputs.push(self.packed_input(&ex.input)?);
            for s in self.sequences(ex)? {
                seqs.push((i, s));
            }
        }
        let refs: Vec<&PackedInput> = enc_inputs.iter().collect();
        let (memory, enc_offsets) = self.net.encoder.forward(g, &refs);
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut targets = Vec::new();
        let mut self_segs = Vec::new();
        let mut cross_segs = Vec::new();
        for (i, s) in &seqs {
            let n = s.tokens.len() - 1;
            let start = ids.len();
            ids.extend(&s.tokens[..n]);
            positions.extend(0..n);
            targets.extend((0..n).map(|j| (j + 1 >= s.loss_from).then_some(s.tokens[j + 1])));
            self_segs.push(AttnSegment::square(start, n));
            cross_segs.push(AttnSegment {
                q_start: start,
                q_len: n,
                k_start: enc_offsets[*i],
                k_len: enc_inputs[*i].len(),
                shared: None,
            });
        }
        let t = self.net.dec_tokens.forward(g, ids);
        let p = self.net.dec_positions.forward(g, positions);
        let x = g.add(t, p);
        let h = self.net.decoder.forward(g, x, memory, &self_segs, &cross_segs);
        Ok((self.net.out.forward(g, h), targets))
    }

    pub fn loss(&self, examples: &[GeneratorExample], with_grads: bool) -> Result<(f64, Option<Gradients>)> {
        self.loss_with(&self.store, examples, with_grads)
    }

    fn loss_with(
        &self,
        store: &ParamStore,
        examples: &[GeneratorExample],
        with_grads: bool,
    ) -> Result<(f64, Option<Gradients>)> {
        let mut g = Graph::new(store);
        let (logits, targets) = self.forward(&mut g, examples)?;
        let loss = g.cross_entropy(logits, targets);
        let grads = with_grads.then(|| g.backward(loss));
        Ok((g.scalar(loss), grads))
    }

    /// Trains from scratch; `validation` defaults to the training set.
    pub fn train(
        train: &[GeneratorExample],
        validation: &[GeneratorExample],
        config: GeneratorConfig,
    ) -> Result<(ArgU, TrainingLog)> {
        if train.is_empty() {
            return Err(Error::validation("generator training corpus is empty"));
        }
        let mut model = ArgU::new(config, Self::build_vocab(train))?;
        // surface template and length errors before any optimization
        for ex in train.iter().chain(validation) {
            model.sequences(ex)?;
        }
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
                let batch: Vec<GeneratorExample> = idx.iter().map(|&i| train[i].clone()).collect();
                let (l, g) = model.loss_with(store, &batch, true)?;
                Ok((l, g.expect("gradients requested")))
            },
            |store| batched_loss(val, settings.batch_size, |b| model.loss_with(store, b, false).map(|r| r.0)),
        );
        model.store = store;
        model.trained = true;
        Ok((model, log?))
    }

    /// Encoder hidden rows for `input`.
    pub fn encode(&self, input: &EncoderInput) -> Result<Mat> {
        let packed = self.packed_input(input)?;
        let mut g = Graph::new(&self.store);
        let (h, _) = self.net.encoder.forward(&mut g, &[&packed]);
        Ok(g.value(h).clone())
    }

    /// Next-token logits after every context position, through the
    /// training graph. Used to cross-check the cached decoding path.
    pub fn context_logits(&self, input: &EncoderInput, context: &[String]) -> Result<Mat> {
        let packed = self.packed_input(input)?;
        let ids = self.ids(context);
        let mut g = Graph::new(&self.store);
        let (memory, _) = self.net.encoder.forward(&mut g, &[&packed]);
        let n = ids.len();
        let t = self.net.dec_tokens.forward(&mut g, ids);
        let p = self.net.dec_positions.forward(&mut g, (0..n).collect());
        let x = g.add(t, p);
        let cross = [AttnSegment {
            q_start: 0,
            q_len: n,
            k_start: 0,
            k_len: packed.len(),
            shared: None,
        }];
        let h = self.net.decoder.forward(&mut g, x, memory, &pack_segments(&[n]), &cross);
        let logits = self.net.out.forward(&mut g, h);
        Ok(g.value(logits).clone())
    }

    fn feed(&self, state: &DecState, token: usize) -> (DecState, Vec<f64>) {
        let mut state = state.clone();
        let pos = state.cache.len();
        if pos >= self.config.max_positions {
            // out of positions: only a terminator can follow
            let mut lp = vec![f64::NEG_INFINITY; self.vocab.len()];
            lp[self.vocab.id(EOS)] = 0.0;
            lp[self.vocab.id(ARGUMENT)] = 0.0;
            return (state, lp);
        }
        let x = self.net.dec_tokens.apply(&self.store, &[token]) + self.net.dec_positions.apply(&self.store, &[pos]);
        let h = self.net.decoder.step(&self.store, &mut state.cache, &x);
        let logits = self.net.out.apply(&self.store, &h);
        let lp = log_softmax(logits.row(0).as_slice().expect("contiguous row"));
        (state, lp)
    }

    /// Cached-path logits after each context token (for cross-checks).
    pub fn cached_logits(&self, memory: &Mat, context: &[String]) -> Mat {
        let mut state = DecState {
            cache: self.net.decoder.start_cache(&self.store, memory),
        };
        let mut out = Mat::zeros((context.len(), self.vocab.len()));
        for (i, id) in self.ids(context).into_iter().enumerate() {
            let x = self.net.dec_tokens.apply(&self.store, &[id])
                + self.net.dec_positions.apply(&self.store, &[state.cache.len()]);
            let h = self.net.decoder.step(&self.store, &mut state.cache, &x);
            out.row_mut(i).assign(&self.net.out.apply(&self.store, &h).row(0));
        }
        out
    }

    /// Beam search after forcing `prefix` as decoder context.
    pub fn decode_with_prefix(&self, memory: &Mat, prefix: &[String], terminators: &[&str]) -> Result<BeamResult> {
        self.decode_inner(memory, prefix, terminators, false)
    }

    /// With `nonempty`, terminators are ruled out for the first token.
    fn decode_inner(&self, memory: &Mat, prefix: &[String], terminators: &[&str], nonempty: bool) -> Result<BeamResult> {
        if !self.trained {
            return Err(Error::Untrained("generator has not been trained or loaded".into()));
        }
        if prefix.is_empty() {
            return Err(Error::validation("decoder prefix is empty"));
        }
        let mut state = DecState {
            cache: self.net.decoder.start_cache(&self.store, memory),
        };
        let mut lp = Vec::new();
        for id in self.ids(prefix) {
            (state, lp) = self.feed(&state, id);
        }
        let stops: Vec<usize> = terminators.iter().map(|t| self.vocab.id(t)).collect();
        if nonempty {
            for &s in &stops {
                lp[s] = f64::NEG_INFINITY;
            }
        }
        beam_search(state, lp, &stops, &self.config.beam, |s, tok| Ok(self.feed(s, tok)))
    }

    fn tokens_of(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.vocab.token(i).to_string()).collect()
    }

    /// Single-phase decoding (Mono and the ablations).
    pub fn decode_mono(&self, memory: &Mat, prefix: &[String]) -> Result<(Vec<String>, f64)> {
        let r = self.decode_with_prefix(memory, prefix, &[EOS])?;
        Ok((self.tokens_of(&r.tokens), r.score))
    }

    /// Template phase then argument phase; the second phase's context is
    /// exactly the template followed by `<argument>`. The template phase
    /// must emit at least one token.
    pub fn decode_dual(&self, memory: &Mat, phase1_prefix: &[String]) -> Result<DualOutput> {
        let t = self.decode_inner(memory, phase1_prefix, &[ARGUMENT, EOS], true)?;
        if t.tokens.is_empty() {
            return Err(Error::validation("template phase produced an empty template"));
        }
        let template = self.tokens_of(&t.tokens);
        let context = build_control_prefix(Variant::Dual, None, None, Phase::Second, Some(&template))?;
        let a = self.decode_with_prefix(memory, &context, &[EOS])?;
        Ok(DualOutput {
            template,
            template_score: t.score,
            phase2_context: context,
            argument: self.tokens_of(&a.tokens),
            argument_score: a.score,
        })
    }

    /// Generates with variables ordered by the request seed.
    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationRecord> {
        let input = EncoderInput::build(&request.topic, &request.variables, request.seed)?;
        self.generate_from(&input, request.stance, request.scheme)
    }

    pub fn generate_from(
        &self,
        input: &EncoderInput,
        stance: Option<Stance>,
        scheme: Option<ArgumentScheme>,
    ) -> Result<GenerationRecord> {
        let variant = self.config.variant;
        let prefix = build_control_prefix(variant, stance, scheme, Phase::First, None)?;
        let memory = self.encode(input)?;
        let mut record = GenerationRecord {
            encoder_input: input.clone(),
            variant,
            stance: stance.filter(|_| variant.uses_stance()),
            scheme: scheme.filter(|_| variant.uses_scheme()),
            control_prefix: prefix.clone(),
            template: None,
            phase2_context: None,
            argument: Vec::new(),
            template_score: None,
            argument_score: 0.0,
            unknown_placeholders: Vec::new(),
            omitted_variables: Vec::new(),
        };
        if variant == Variant::Dual {
            let out = self.decode_dual(&memory, &prefix)?;
            let (unknown, omitted) = template_flags(&out.template, input.variables.len());
            record.unknown_placeholders = unknown;
            record.omitted_variables = omitted;
            record.template = Some(out.template);
            record.template_score = Some(out.template_score);
            record.phase2_context = Some(out.phase2_context);
            record.argument = out.argument;
            record.argument_score = out.argument_score;
        } else {
            let (argument, score) = self.decode_mono(&memory, &prefix)?;
            record.argument = argument;
            record.argument_score = score;
        }
        Ok(record)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            config: serde_json::to_value(&self.config)?,
            extra: serde_json::json!({ "vocab": self.vocab, "special_tokens": SPECIAL_TOKENS }),
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
        let specials: Vec<String> = serde_json::from_value(ck.extra["special_tokens"].clone())?;
        if specials != SPECIAL_TOKENS {
            return Err(Error::Checkpoint("special-token table differs from this build".into()));
        }
        let mut config: GeneratorConfig = serde_json::from_value(ck.config.clone())?;
        config.seed.get_or_insert(0);
        let vocab: Vocab = serde_json::from_value(ck.extra["vocab"].clone())?;
        let mut model = ArgU::new(config, vocab)?;
        ck.load_into(&mut model.store)?;
        model.trained = true;
        Ok(model)
    }
}

#[cfg(test)]
mod tests;
