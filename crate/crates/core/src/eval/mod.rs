//! Automatic evaluation of generated arguments.

mod metrics;
mod nli;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use metrics::{bleu_stats, corpus_bleu, lcs_length, rouge_l, BleuConfig, BleuStats};
pub use nli::{entail_contra, FixedNli, NliFlags, NliJudgement, NliProvider, RuleNli};

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::normalize::{cosine, EmbeddingProvider};

/// Lowercased word tokens used by every text metric.
pub fn eval_tokens(text: &str) -> Vec<String> {
    tokenize(text).tokens.into_iter().map(|t| t.to_lowercase()).collect()
}

/// Mean cosine similarity between each variable and the generated text.
pub fn fact_faithfulness(variables: &[String], generated: &str, provider: &dyn EmbeddingProvider) -> Result<f64> {
    if variables.is_empty() {
        return Err(Error::validation("fact faithfulness needs at least one variable"));
    }
    if generated.trim().is_empty() {
        return Err(Error::validation("generated text is empty"));
    }
    let g = provider.embed(generated)?;
    let sims = variables
        .iter()
        .map(|v| Ok(cosine(&provider.embed(v)?, &g)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(order_free_mean(sims))
}

/// Mean that does not depend on input order.
fn order_free_mean(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub bleu: BleuConfig,
    pub nli_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bleu: BleuConfig::default(),
            nli_threshold: 0.8,
        }
    }
}

/// One generated argument with its inputs and the original it should match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub variables: Vec<String>,
    pub original: String,
    pub generated: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub rouge_l: f64,
    pub fact: f64,
    pub entails: bool,
    pub contradicts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub count: usize,
    pub bleu: f64,
    pub rouge_l: f64,
    pub fact: f64,
    pub entail_rate: f64,
    pub contra_rate: f64,
    pub entail_count: usize,
    pub contra_count: usize,
    pub rows: Vec<EvalRow>,
}

pub fn evaluate(
    model: &str,
    items: &[EvalItem],
    embedder: &dyn EmbeddingProvider,
    nli: &dyn NliProvider,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::validation("nothing to evaluate"));
    }
    let candidates: Vec<Vec<String>> = items.iter().map(|i| eval_tokens(&i.generated)).collect();
    let references: Vec<Vec<String>> = items.iter().map(|i| eval_tokens(&i.original)).collect();
    let bleu = corpus_bleu(&candidates, &references, &config.bleu)?;
    let mut rows = Vec::with_capacity(items.len());
    for ((item, cand), reference) in items.iter().zip(&candidates).zip(&references) {
        // an empty generation shares nothing with its reference
        let rouge = if cand.is_empty() { 0.0 } else { rouge_l(cand, reference)? };
        let fact = if item.generated.trim().is_empty() {
            0.0
        } else {
            fact_faithfulness(&item.variables, &item.generated, embedder)?
        };
        let flags = entail_contra(&item.original, &item.generated, nli, config.nli_threshold)?;
        rows.push(EvalRow {
            id: item.id.clone(),
            rouge_l: rouge,
            fact,
            entails: flags.entails,
            contradicts: flags.contradicts,
        });
    }
    let n = rows.len();
    let entail_count = rows.iter().filter(|r| r.entails).count();
    let contra_count = rows.iter().filter(|r| r.contradicts).count();
    Ok(EvalReport {
        model: model.to_string(),
        count: n,
        bleu,
        rouge_l: order_free_mean(rows.iter().map(|r| r.rouge_l).collect()),
        fact: order_free_mean(rows.iter().map(|r| r.fact).collect()),
        entail_rate: entail_count as f64 / n as f64,
        contra_rate: contra_count as f64 / n as f64,
        entail_count,
        contra_count,
        rows,
    })
}

/// Plain-text table with one line per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "Model", "BLEU", "RougeL", "Fact", "Entail", "Contra"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}",
            r.model, r.bleu, r.rouge_l, r.fact, r.entail_rate, r.contra_rate
        );
    }
    out
}
