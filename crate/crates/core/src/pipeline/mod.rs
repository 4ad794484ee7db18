//! Stage runner: fixture, training, annotation, normalization, filtering,
//! generation and evaluation over a working directory.
//!
//! Every stage writes its outputs and a `manifest.json` recording input
//! hashes, the hash of the configuration it ran with, the seed and counts.
//! A rerun with unchanged inputs and configuration is a no-op; a rerun
//! whose inputs or configuration changed is refused unless forced.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{GenerationSettings, PipelineConfig};

use crate::corpus::{
    read_corpus, read_kb, write_corpus, write_kb, AnnotatedExample, CorpusRecord, FactVariable, Grounding,
    Provenance,
};
use crate::corpus::io::{read_jsonl, write_jsonl};
use crate::error::{Error, Result};
use crate::eval::{evaluate, render_table, EvalItem, EvalReport, RuleNli};
use crate::fixture::generate_fixture;
use crate::generator::{derive_seed, detokenize, ArgU, GenerationRecord, GeneratorExample, Variant};
use crate::grounder::{ArgSpan, GroundingExample};
use crate::normalize::{
    filter_and_expand, normalize_corpus, scheme_probability_filter, HashedBow, NormalizedExample, RuleClaims,
    SpanOutcome,
};
use crate::tagger::{ArgSpanScheme, TaggerVariant};

/// Models trainable by the `train` stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainTarget {
    ArgSpan,
    Tagger(TaggerVariant),
    ArgU(Variant),
}

impl TrainTarget {
    pub const ALL: [TrainTarget; 7] = [
        TrainTarget::ArgSpan,
        TrainTarget::Tagger(TaggerVariant::Parallel),
        TrainTarget::Tagger(TaggerVariant::Pipelined),
        TrainTarget::ArgU(Variant::Mono),
        TrainTarget::ArgU(Variant::Dual),
        TrainTarget::ArgU(Variant::Stance),
        TrainTarget::ArgU(Variant::Scheme),
    ];

    pub fn name(self) -> String {
        match self {
            TrainTarget::ArgSpan => "argspan".into(),
            TrainTarget::Tagger(v) => format!("argspanscheme-{}", v.name()),
            TrainTarget::ArgU(v) => format!("argu-{}", v.name()),
        }
    }
}

impl fmt::Display for TrainTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for TrainTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainTarget::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            let names: Vec<String> = TrainTarget::ALL.iter().map(|t| t.name()).collect();
            Error::Config(format!("unknown model `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    pub config_hash: String,
    /// Input path (relative to the input directory) to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, usize>,
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: String,
    pub status: StageStatus,
    pub counts: BTreeMap<String, usize>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn write_json_file<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// An upstream file and the stage that produces it.
struct Input {
    path: String,
    stage: String,
}

fn input(path: impl Into<String>, stage: impl Into<String>) -> Input {
    Input {
        path: path.into(),
        stage: stage.into(),
    }
}

/// One generated argument together with what it is evaluated against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub id: String,
    pub original: String,
    pub variables: Vec<String>,
    pub record: GenerationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NormalizedRecord {
    record: CorpusRecord,
    outcomes: Vec<SpanOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Decision {
    id: String,
    kept: bool,
    reasons: Vec<String>,
}

/// A configured pipeline over an input and an output working directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub input: PathBuf,
    pub output: PathBuf,
    /// Rerun stages even when their manifest disagrees.
    pub force: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let dir = dir.into();
        Ok(Pipeline {
            config,
            input: dir.clone(),
            output: dir,
            force: false,
        })
    }

    fn seed(&self, label: &str) -> u64 {
        derive_seed(self.config.seed, label)
    }

    fn upstream(&self, rel: &str) -> PathBuf {
        self.input.join(rel)
    }

    fn run_stage(
        &self,
        stage: &str,
        dir: &str,
        inputs: &[Input],
        config: serde_json::Value,
        outputs: &[&str],
        body: impl FnOnce(&Path) -> Result<BTreeMap<String, usize>>,
    ) -> Result<StageReport> {
        let mut input_hashes = BTreeMap::new();
        for i in inputs {
            let path = self.upstream(&i.path);
            if !path.is_file() {
                return Err(Error::MissingInput {
                    path,
                    stage: i.stage.clone(),
                });
            }
            input_hashes.insert(i.path.clone(), hash_file(&path)?);
        }
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        let out = self.output.join(dir);
        let manifest_path = out.join(MANIFEST);
        if manifest_path.is_file() {
            let old: Manifest = read_json_file(&manifest_path)?;
            let mut reason = None;
            if old.config_hash != config_hash || old.seed != self.config.seed {
                reason = Some("configuration or seed differs from the recorded run".to_string());
            } else if old.inputs != input_hashes {
                let changed: Vec<&str> = input_hashes
                    .iter()
                    .filter(|(k, v)| old.inputs.get(*k) != Some(v))
                    .map(|(k, _)| k.as_str())
                    .collect();
                reason = Some(format!("inputs changed since the recorded run: {}", changed.join(", ")));
            }
            match reason {
                Some(reason) if !self.force => {
                    return Err(Error::Manifest {
                        dir: out,
                        reason: format!("{reason}; rerun with --force to overwrite"),
                    })
                }
                Some(_) => {}
                None => {
                    let intact = old.outputs.iter().all(|(name, hash)| {
                        hash_file(&out.join(name)).is_ok_and(|h| &h == hash)
                    });
                    if intact {
                        return Ok(StageReport {
                            stage: stage.to_string(),
                            status: StageStatus::UpToDate,
                            counts: old.counts,
                        });
                    }
                }
            }
        }
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        if manifest_path.exists() {
            fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        }
        let counts = body(&out)?;
        let mut output_hashes = BTreeMap::new();
        for name in outputs {
            output_hashes.insert(name.to_string(), hash_file(&out.join(name))?);
        }
        write_json_file(
            &Manifest {
                stage: stage.to_string(),
                seed: self.config.seed,
                config_hash,
                inputs: input_hashes,
                outputs: output_hashes,
                counts: counts.clone(),
            },
            &manifest_path,
        )?;
        Ok(StageReport {
            stage: stage.to_string(),
            status: StageStatus::Ran,
            counts,
        })
    }

    /// Writes the synthetic corpus and knowledge base.
    pub fn fixture(&self) -> Result<StageReport> {
        let spec = self.config.fixture.clone();
        self.run_stage(
            "fixture",
            "fixture",
            &[],
            serde_json::to_value(&spec)?,
            &["annotated.jsonl", "unlabeled.jsonl", "parallel.jsonl", "kb.jsonl"],
            |out| {
                let corpus = generate_fixture(&spec)?;
                write_corpus(&corpus.annotated, out.join("annotated.jsonl"))?;
                write_corpus(&corpus.unlabeled, out.join("unlabeled.jsonl"))?;
                write_corpus(&corpus.parallel, out.join("parallel.jsonl"))?;
                write_kb(&corpus.kb, out.join("kb.jsonl"))?;
                Ok(BTreeMap::from([
                    ("annotated".into(), corpus.annotated.len()),
                    ("unlabeled".into(), corpus.unlabeled.len()),
                    ("parallel".into(), corpus.parallel.len()),
                    ("kb".into(), corpus.kb.len()),
                ]))
            },
        )
    }

    pub fn train(&self, target: TrainTarget) -> Result<StageReport> {
        let stage = format!("train-{target}");
        let dir = format!("models/{target}");
        let seed = self.seed(&stage);
        match target {
            TrainTarget::ArgSpan => {
                let mut cfg = self.config.grounder.clone();
                cfg.seed = Some(seed);
                self.run_stage(
                    &stage,
                    &dir,
                    &[input("fixture/annotated.jsonl", "fixture"), input("fixture/kb.jsonl", "fixture")],
                    serde_json::to_value(&cfg)?,
                    &["model.ckpt", "log.json"],
                    |out| {
                        let kb = read_kb(self.upstream("fixture/kb.jsonl"))?;
                        let examples = read_corpus(self.upstream("fixture/annotated.jsonl"))?
                            .iter()
                            .map(|e| GroundingExample::from_annotated(e, &kb))
                            .collect::<Result<Vec<_>>>()?;
                        let (model, log) = ArgSpan::train(&examples, &[], cfg)?;
                        let mut exact = 0;
                        for e in &examples {
                            exact += usize::from(model.ground(&e.argument, &e.variables)?.labeling == e.gold);
                        }
                        model.save(out.join("model.ckpt"))?;
                        write_json_file(&log, &out.join("log.json"))?;
                        Ok(BTreeMap::from([
                            ("examples".into(), examples.len()),
                            ("steps".into(), log.steps.len()),
                            ("exact_span_match".into(), exact),
                        ]))
                    },
                )
            }
            TrainTarget::Tagger(variant) => {
                let mut cfg = self.config.tagger.clone();
                cfg.variant = variant;
                cfg.seed = Some(seed);
                self.run_stage(
                    &stage,
                    &dir,
                    &[input("fixture/annotated.jsonl", "fixture")],
                    serde_json::to_value(&cfg)?,
                    &["model.ckpt", "log.json"],
                    |out| {
                        let examples = read_corpus(self.upstream("fixture/annotated.jsonl"))?;
                        let (model, log) = ArgSpanScheme::train(&examples, &[], cfg)?;
                        let mut subset = 0;
                        for e in &examples {
                            subset += usize::from(model.predict(&e.argument)?.labels == e.schemes);
                        }
                        model.save(out.join("model.ckpt"))?;
                        write_json_file(&log, &out.join("log.json"))?;
                        Ok(BTreeMap::from([
                            ("examples".into(), examples.len()),
                            ("steps".into(), log.steps.len()),
                            ("scheme_subset_match".into(), subset),
                        ]))
                    },
                )
            }
            TrainTarget::ArgU(variant) => {
                let mut cfg = self.config.generator.clone();
                cfg.variant = variant;
                cfg.seed = Some(seed);
                let settings = self.config.generation.clone();
                self.run_stage(
                    &stage,
                    &dir,
                    &[input("filter/merged.jsonl", "filter"), input("filter/kb.jsonl", "filter")],
                    serde_json::json!({ "generator": cfg, "generation": settings }),
                    &["model.ckpt", "log.json", "test.jsonl"],
                    |out| {
                        let (train, test) = self.generator_split(settings.test_fraction)?;
                        let usable = |rows: Vec<GeneratorExample>| -> Vec<GeneratorExample> {
                            rows.into_iter().filter(|r| !variant.uses_scheme() || r.scheme.is_some()).collect()
                        };
                        let (train, test) = (usable(train), usable(test));
                        let (model, log) = ArgU::train(&train, &[], cfg)?;
                        model.save(out.join("model.ckpt"))?;
                        write_json_file(&log, &out.join("log.json"))?;
                        write_jsonl(&test, &out.join("test.jsonl"))?;
                        Ok(BTreeMap::from([
                            ("train".into(), train.len()),
                            ("test".into(), test.len()),
                            ("steps".into(), log.steps.len()),
                        ]))
                    },
                )
            }
        }
    }

    /// Generation rows of the merged corpus, split into train and test by
    /// a seeded shuffle shared by all variants.
    fn generator_split(&self, test_fraction: f64) -> Result<(Vec<GeneratorExample>, Vec<GeneratorExample>)> {
        let kb = read_kb(self.upstream("filter/kb.jsonl"))?;
        let merged = read_corpus(self.upstream("filter/merged.jsonl"))?;
        let row_seed = self.seed("generator-rows");
        let mut rows = merged
            .iter()
            .map(|e| GeneratorExample::from_annotated(e, &kb, row_seed))
            .collect::<Result<Vec<_>>>()?;
        if rows.len() < 2 {
            return Err(Error::validation("the merged corpus needs at least two examples"));
        }
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed("generator-split")));
        let n_test = ((rows.len() as f64 * test_fraction).round() as usize).clamp(1, rows.len() - 1);
        let train = rows.split_off(n_test);
        Ok((train, rows))
    }

    /// Grounds the unlabeled P1 examples with ArgSpan and labels the
    /// parallel corpus with the configured tagger.
    pub fn annotate(&self) -> Result<StageReport> {
        let tagger_dir = format!("models/{}", TrainTarget::Tagger(self.config.tagger.variant));
        let tagger_path = format!("{tagger_dir}/model.ckpt");
        self.run_stage(
            "annotate",
            "annotate",
            &[
                input("fixture/unlabeled.jsonl", "fixture"),
                input("fixture/parallel.jsonl", "fixture"),
                input("fixture/kb.jsonl", "fixture"),
                input("models/argspan/model.ckpt", "train-argspan"),
                input(tagger_path.clone(), format!("train-{}", TrainTarget::Tagger(self.config.tagger.variant))),
            ],
            serde_json::json!({ "tagger": self.config.tagger.variant }),
            &["p1_auto.jsonl", "pc_auto.jsonl"],
            |out| {
                let kb = read_kb(self.upstream("fixture/kb.jsonl"))?;
                let grounder = ArgSpan::load(self.upstream("models/argspan/model.ckpt"))?;
                let tagger = ArgSpanScheme::load(self.upstream(&tagger_path))?;
                let label = |ex: &mut AnnotatedExample| -> Result<crate::corpus::SpanLabeling> {
                    let pred = tagger.predict(&ex.argument)?;
                    ex.schemes = pred.labels.clone();
                    if ex.schemes.is_empty() {
                        ex.schemes.insert(crate::normalize::top_scheme(&pred.probabilities).0);
                    }
                    ex.scheme_probs = Some(pred.probabilities);
                    Ok(pred.spans)
                };
                let mut p1 = read_corpus(self.upstream("fixture/unlabeled.jsonl"))?;
                let mut p1_spans = 0;
                for ex in &mut p1 {
                    let vars = ex
                        .variables
                        .iter()
                        .map(|id| {
                            kb.get(id).cloned().ok_or_else(|| {
                                Error::validation(format!("example `{}` lists unknown variable `{id}`", ex.id))
                            })
                        })
                        .collect::<Result<Vec<FactVariable>>>()?;
                    ex.spans = grounder.ground(&ex.argument, &vars)?.labeling;
                    p1_spans += ex.spans.len();
                    label(ex)?;
                    ex.provenance = Provenance::P1Auto;
                }
                let mut pc = read_corpus(self.upstream("fixture/parallel.jsonl"))?;
                let mut pc_spans = 0;
                for ex in &mut pc {
                    ex.spans = label(ex)?;
                    ex.variables.clear();
                    ex.provenance = Provenance::PcAuto;
                    pc_spans += ex.spans.len();
                }
                write_corpus(&p1, out.join("p1_auto.jsonl"))?;
                write_corpus(&pc, out.join("pc_auto.jsonl"))?;
                Ok(BTreeMap::from([
                    ("p1_examples".into(), p1.len()),
                    ("p1_spans".into(), p1_spans),
                    ("pc_examples".into(), pc.len()),
                    ("pc_spans".into(), pc_spans),
                ]))
            },
        )
    }

    /// Maps parallel-corpus spans to KB variables.
    pub fn normalize(&self) -> Result<StageReport> {
        let filter = self.config.filter.clone();
        let width = self.config.embedding_width;
        self.run_stage(
            "normalize",
            "normalize",
            &[input("annotate/pc_auto.jsonl", "annotate"), input("fixture/kb.jsonl", "fixture")],
            serde_json::json!({ "filter": filter, "embedding_width": width }),
            &["normalized.jsonl"],
            |out| {
                let kb = read_kb(self.upstream("fixture/kb.jsonl"))?;
                let pc = read_corpus(self.upstream("annotate/pc_auto.jsonl"))?;
                let normalized = normalize_corpus(pc, &kb, &HashedBow { width }, &filter)?;
                let mut counts: BTreeMap<String, usize> =
                    ["direct", "indirect", "unmapped", "given"].iter().map(|k| (k.to_string(), 0)).collect();
                for n in &normalized {
                    for o in &n.outcomes {
                        let key = match o {
                            SpanOutcome::Given { .. } => "given",
                            SpanOutcome::Direct { .. } => "direct",
                            SpanOutcome::Indirect { .. } => "indirect",
                            SpanOutcome::Unmapped => "unmapped",
                        };
                        *counts.get_mut(key).expect("preset") += 1;
                    }
                }
                counts.insert("examples".into(), normalized.len());
                write_jsonl(
                    normalized.iter().map(|n| NormalizedRecord {
                        record: CorpusRecord::from_example(&n.example),
                        outcomes: n.outcomes.clone(),
                    }),
                    &out.join("normalized.jsonl"),
                )?;
                Ok(counts)
            },
        )
    }

    /// Scheme-probability and quality filters over the parallel corpus, KB
    /// expansion, and the merge with the P1 data.
    pub fn filter(&self) -> Result<StageReport> {
        let filter = self.config.filter.clone();
        self.run_stage(
            "filter",
            "filter",
            &[
                input("normalize/normalized.jsonl", "normalize"),
                input("annotate/p1_auto.jsonl", "annotate"),
                input("fixture/annotated.jsonl", "fixture"),
                input("fixture/kb.jsonl", "fixture"),
            ],
            serde_json::to_value(&filter)?,
            &["merged.jsonl", "kb.jsonl", "decisions.jsonl"],
            |out| {
                let kb = read_kb(self.upstream("fixture/kb.jsonl"))?;
                let normalized: Vec<NormalizedExample> =
                    read_jsonl::<NormalizedRecord>(&self.upstream("normalize/normalized.jsonl"))?
                        .into_iter()
                        .enumerate()
                        .map(|(i, r)| {
                            Ok(NormalizedExample {
                                example: r.record.into_example(i + 1)?,
                                outcomes: r.outcomes,
                            })
                        })
                        .collect::<Result<_>>()?;
                let by_scheme = scheme_probability_filter(
                    normalized.iter().map(|n| n.example.clone()).collect(),
                    filter.scheme_prob_factor,
                )?;
                let passed: BTreeSet<&str> = by_scheme.kept.iter().map(|e| e.id.as_str()).collect();
                let mut decisions = Vec::new();
                for id in &by_scheme.dropped_others {
                    decisions.push(Decision { id: id.clone(), kept: false, reasons: vec!["others-scheme".into()] });
                }
                for id in &by_scheme.dropped_low_probability {
                    decisions.push(Decision { id: id.clone(), kept: false, reasons: vec!["scheme-probability".into()] });
                }
                let candidates: Vec<NormalizedExample> =
                    normalized.into_iter().filter(|n| passed.contains(n.example.id.as_str())).collect();
                let outcome = filter_and_expand(candidates, &kb, &filter, &RuleClaims)?;
                for (id, reasons) in &outcome.decisions {
                    decisions.push(Decision {
                        id: id.clone(),
                        kept: reasons.is_empty(),
                        reasons: reasons.iter().map(|r| r.name().to_string()).collect(),
                    });
                }
                decisions.sort_by(|a, b| a.id.cmp(&b.id));

                let human = read_corpus(self.upstream("fixture/annotated.jsonl"))?;
                let auto = read_corpus(self.upstream("annotate/p1_auto.jsonl"))?;
                // grounded P1 rows only: a row without a grounded span carries no fact
                let grounded = |e: &AnnotatedExample| e.spans.spans.iter().any(|s| s.grounding != Grounding::Others);
                let auto_kept: Vec<AnnotatedExample> = auto.into_iter().filter(grounded).collect();
                let mut merged = human.clone();
                merged.extend(auto_kept.iter().cloned());
                merged.extend(outcome.kept.iter().cloned());
                for e in &merged {
                    e.validate_against(&outcome.kb)?;
                }
                write_corpus(&merged, out.join("merged.jsonl"))?;
                write_kb(&outcome.kb, out.join("kb.jsonl"))?;
                write_jsonl(&decisions, &out.join("decisions.jsonl"))?;
                Ok(BTreeMap::from([
                    ("p1_human".into(), human.len()),
                    ("p1_auto".into(), auto_kept.len()),
                    ("pc_kept".into(), outcome.kept.len()),
                    ("pc_dropped".into(), decisions.iter().filter(|d| !d.kept).count()),
                    ("kb_added".into(), outcome.added_variables.len()),
                    ("merged".into(), merged.len()),
                ]))
            },
        )
    }

    /// Generates an argument for every held-out row of a trained ArgU variant.
    pub fn generate(&self, variant: Variant) -> Result<StageReport> {
        let target = TrainTarget::ArgU(variant);
        let model_dir = format!("models/{target}");
        self.run_stage(
            &format!("generate-{target}"),
            &format!("generate/{target}"),
            &[
                input(format!("{model_dir}/model.ckpt"), format!("train-{target}")),
                input(format!("{model_dir}/test.jsonl"), format!("train-{target}")),
            ],
            serde_json::json!({ "variant": variant }),
            &["generations.jsonl"],
            |out| {
                let model = ArgU::load(self.upstream(&format!("{model_dir}/model.ckpt")))?;
                let rows: Vec<GeneratorExample> = read_jsonl(&self.upstream(&format!("{model_dir}/test.jsonl")))?;
                let mut outputs = Vec::with_capacity(rows.len());
                let mut flagged = 0;
                for row in &rows {
                    let record = model.generate_from(&row.input, Some(row.stance), row.scheme)?;
                    flagged += usize::from(!record.unknown_placeholders.is_empty() || !record.omitted_variables.is_empty());
                    outputs.push(GenerationOutput {
                        id: row.id.clone(),
                        original: detokenize(&row.argument),
                        variables: row.input.variables.clone(),
                        record,
                    });
                }
                write_jsonl(&outputs, &out.join("generations.jsonl"))?;
                Ok(BTreeMap::from([
                    ("generations".into(), outputs.len()),
                    ("template_flags".into(), flagged),
                ]))
            },
        )
    }

    pub fn evaluate(&self, variant: Variant) -> Result<StageReport> {
        let target = TrainTarget::ArgU(variant);
        let source = format!("generate/{target}/generations.jsonl");
        let eval = self.config.eval.clone();
        let width = self.config.embedding_width;
        self.run_stage(
            &format!("evaluate-{target}"),
            &format!("evaluate/{target}"),
            &[input(source.clone(), format!("generate-{target}"))],
            serde_json::json!({ "eval": eval, "embedding_width": width }),
            &["report.json", "report.txt"],
            |out| {
                let generations: Vec<GenerationOutput> = read_jsonl(&self.upstream(&source))?;
                let items: Vec<EvalItem> = generations
                    .iter()
                    .map(|g| EvalItem {
                        id: g.id.clone(),
                        variables: g.variables.clone(),
                        original: g.original.clone(),
                        generated: g.record.argument_text(),
                    })
                    .collect();
                let report = evaluate(&target.name(), &items, &HashedBow { width }, &RuleNli, &eval)?;
                write_json_file(&report, &out.join("report.json"))?;
                let table = render_table(std::slice::from_ref(&report));
                fs::write(out.join("report.txt"), &table).map_err(|e| Error::io(out.join("report.txt"), e))?;
                Ok(BTreeMap::from([
                    ("pairs".into(), report.count),
                    ("entail".into(), report.entail_count),
                    ("contra".into(), report.contra_count),
                ]))
            },
        )
    }

    pub fn load_report(&self, variant: Variant) -> Result<EvalReport> {
        let path = self.output.join(format!("evaluate/{}/report.json", TrainTarget::ArgU(variant)));
        if !path.is_file() {
            return Err(Error::MissingInput {
                path,
                stage: format!("evaluate-{}", TrainTarget::ArgU(variant)),
            });
        }
        read_json_file(&path)
    }

    /// Every stage in order for the given generator variants.
    pub fn run_all(&self, variants: &[Variant]) -> Result<Vec<StageReport>> {
        let mut reports = vec![
            self.fixture()?,
            self.train(TrainTarget::ArgSpan)?,
            self.train(TrainTarget::Tagger(self.config.tagger.variant))?,
            self.annotate()?,
            self.normalize()?,
            self.filter()?,
        ];
        for &v in variants {
            reports.push(self.train(TrainTarget::ArgU(v))?);
            reports.push(self.generate(v)?);
            reports.push(self.evaluate(v)?);
        }
        Ok(reports)
    }
}
