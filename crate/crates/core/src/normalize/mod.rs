//! Grounds automatically detected spans to the knowledge base, expands the
//! knowledge base with unmatched facts, and filters the expanded corpus.
//!
//! Order of application: [`scheme_probability_filter`], then
//! [`normalize_corpus`], then [`filter_and_expand`].

mod cluster;
pub mod embed;
pub mod filter;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use cluster::{cluster_embeddings, Clusters};
pub use embed::{cosine, EmbeddingProvider, HashedBow, TableProvider};
pub use filter::{
    quality_filter, reason_counts, scheme_means, scheme_probability_filter, top_scheme, ClaimDetector,
    ConstantClaims, DropReason, FilterConfig, RuleClaims, SchemeFilterOutcome, CLAIM_CUES,
};

use crate::corpus::{AnnotatedExample, FactVariable, Grounding, KnowledgeBase, Origin, Span};
use crate::error::{Error, Result};
use cluster::SLACK;
use filter::{normalize_text, variable_key};

/// How one span was grounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SpanOutcome {
    /// Already grounded on input; left as is.
    Given { variable: String },
    Direct { variable: String, similarity: f64 },
    /// Inherited from the directly mapped span `via` (`example#span`).
    Indirect { variable: String, via: String },
    Unmapped,
}

impl SpanOutcome {
    pub fn variable(&self) -> Option<&str> {
        match self {
            SpanOutcome::Given { variable }
            | SpanOutcome::Direct { variable, .. }
            | SpanOutcome::Indirect { variable, .. } => Some(variable),
            SpanOutcome::Unmapped => None,
        }
    }
}

/// An example after normalization with one outcome per span.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedExample {
    pub example: AnnotatedExample,
    pub outcomes: Vec<SpanOutcome>,
}

/// Precomputed embeddings of every KB variable.
#[derive(Debug, Clone)]
pub struct KbIndex {
    entries: Vec<(String, Vec<f64>)>,
}

impl KbIndex {
    pub fn new(kb: &KnowledgeBase, provider: &dyn EmbeddingProvider) -> Result<Self> {
        if kb.is_empty() {
            return Err(Error::validation("knowledge base is empty"));
        }
        let entries = kb
            .variables()
            .iter()
            .map(|v| Ok((v.id.clone(), provider.embed(&v.text)?)))
            .collect::<Result<_>>()?;
        Ok(KbIndex { entries })
    }

    /// Most similar variable if its cosine reaches `threshold`; equal
    /// similarities resolve to the smallest id.
    pub fn nearest(&self, embedding: &[f64], threshold: f64) -> Option<(String, f64)> {
        let mut best: Option<(&str, f64)> = None;
        for (id, v) in &self.entries {
            let sim = cosine(embedding, v);
            let better = match best {
                None => true,
                Some((bid, bs)) => sim > bs + SLACK || ((sim - bs).abs() <= SLACK && id.as_str() < bid),
            };
            if better {
                best = Some((id, sim));
            }
        }
        best.filter(|&(_, s)| s >= threshold - SLACK).map(|(id, s)| (id.to_string(), s))
    }
}

pub fn direct_map(
    span_text: &str,
    kb: &KnowledgeBase,
    provider: &dyn EmbeddingProvider,
    threshold: f64,
) -> Result<Option<(String, f64)>> {
    if span_text.trim().is_empty() {
        return Err(Error::validation("span text is empty"));
    }
    let index = KbIndex::new(kb, provider)?;
    Ok(index.nearest(&provider.embed(span_text)?, threshold))
}

pub fn cluster_spans(
    span_texts: &[&str],
    provider: &dyn EmbeddingProvider,
    threshold: f64,
    min_size: usize,
) -> Result<Clusters> {
    let embeddings = span_texts.iter().map(|t| provider.embed(t)).collect::<Result<Vec<_>>>()?;
    Ok(cluster_embeddings(&embeddings, threshold, min_size))
}

/// Variable of the most similar directly mapped member of `span`'s cluster,
/// with that member's index.
pub fn indirect_map(
    span: usize,
    clusters: &Clusters,
    direct: &[Option<(String, f64)>],
    embeddings: &[Vec<f64>],
) -> Result<Option<(String, usize)>> {
    if span >= clusters.assignment.len() || direct.len() != clusters.assignment.len() {
        return Err(Error::validation(format!("span {span} is not part of the clustering")));
    }
    let Some(members) = clusters.cluster_of(span) else {
        return Ok(None);
    };
    let mut best: Option<(usize, f64)> = None;
    for &m in members {
        if m == span || direct[m].is_none() {
            continue;
        }
        let sim = cosine(&embeddings[span], &embeddings[m]);
        if best.is_none_or(|(_, s)| sim > s + SLACK) {
            best = Some((m, sim));
        }
    }
    Ok(best.map(|(m, _)| (direct[m].as_ref().expect("mapped member").0.clone(), m)))
}

/// Distinct grounded variable ids in span order.
pub fn grounded_variables(spans: &[Span]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in spans {
        if let Grounding::Variable(id) = &s.grounding {
            if !out.contains(id) {
                out.push(id.clone());
            }
        }
    }
    out
}

/// Grounds every `OTHERS` span of the corpus directly or through its
/// cluster. Spans already grounded on input are left untouched.
pub fn normalize_corpus(
    examples: Vec<AnnotatedExample>,
    kb: &KnowledgeBase,
    provider: &dyn EmbeddingProvider,
    config: &FilterConfig,
) -> Result<Vec<NormalizedExample>> {
    config.validate()?;
    let index = KbIndex::new(kb, provider)?;
    // (example, span) of every span to normalize
    let mut pool = Vec::new();
    for (e, ex) in examples.iter().enumerate() {
        ex.validate_against(kb)?;
        for (s, span) in ex.spans.spans.iter().enumerate() {
            if span.grounding == Grounding::Others {
                pool.push((e, s));
            }
        }
    }
    let embeddings = pool
        .iter()
        .map(|&(e, s)| provider.embed(&examples[e].span_text(&examples[e].spans.spans[s])))
        .collect::<Result<Vec<_>>>()?;
    let direct: Vec<_> = embeddings.iter().map(|v| index.nearest(v, config.direct_threshold)).collect();
    let clusters = cluster_embeddings(&embeddings, config.community_threshold, config.min_community_size);
    let mut outcomes: HashMap<(usize, usize), SpanOutcome> = HashMap::new();
    for (i, &(e, s)) in pool.iter().enumerate() {
        let outcome = if let Some((variable, similarity)) = &direct[i] {
            SpanOutcome::Direct {
                variable: variable.clone(),
                similarity: *similarity,
            }
        } else if let Some((variable, via)) = indirect_map(i, &clusters, &direct, &embeddings)? {
            let (ve, vs) = pool[via];
            SpanOutcome::Indirect {
                variable,
                via: format!("{}#{vs}", examples[ve].id),
            }
        } else {
            SpanOutcome::Unmapped
        };
        outcomes.insert((e, s), outcome);
    }
    Ok(examples
        .into_iter()
        .enumerate()
        .map(|(e, mut example)| {
            let outcomes: Vec<SpanOutcome> = example
                .spans
                .spans
                .iter_mut()
                .enumerate()
                .map(|(s, span)| match &span.grounding {
                    Grounding::Variable(id) => SpanOutcome::Given { variable: id.clone() },
                    Grounding::Others => {
                        let o = outcomes.remove(&(e, s)).expect("pooled span");
                        if let Some(v) = o.variable() {
                            span.grounding = Grounding::Variable(v.to_string());
                        }
                        o
                    }
                })
                .collect();
            example.variables = grounded_variables(&example.spans.spans);
            NormalizedExample { example, outcomes }
        })
        .collect())
}

/// Adds one expanded variable per distinct normalized text. Texts already
/// in `kb` reuse the existing variable. Returns the id for every input.
pub fn expand_kb(kb: &mut KnowledgeBase, facts: &[(String, String)]) -> Result<Vec<String>> {
    let mut by_text: HashMap<String, String> = kb
        .variables()
        .iter()
        .map(|v| (normalize_text(&v.text), v.id.clone()))
        .collect();
    let mut next = kb.len();
    let mut ids = Vec::with_capacity(facts.len());
    for (topic, text) in facts {
        let key = normalize_text(text);
        if key.is_empty() {
            return Err(Error::validation("cannot add an empty fact to the knowledge base"));
        }
        if let Some(id) = by_text.get(&key) {
            ids.push(id.clone());
            continue;
        }
        let id = loop {
            let candidate = format!("x{next}");
            next += 1;
            if !kb.contains(&candidate) {
                break candidate;
            }
        };
        kb.insert(FactVariable {
            id: id.clone(),
            text: text.trim().to_string(),
            topic: topic.clone(),
            origin: Origin::Expanded,
        })?;
        by_text.insert(key, id.clone());
        ids.push(id);
    }
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<AnnotatedExample>,
    pub kb: KnowledgeBase,
    /// Failed rules per input example id; empty for kept examples.
    pub decisions: Vec<(String, Vec<DropReason>)>,
    pub added_variables: Vec<String>,
}

/// Applies the quality rules, then adds the unmapped spans of the kept
/// examples to the KB and grounds those spans to the new variables.
pub fn filter_and_expand(
    normalized: Vec<NormalizedExample>,
    kb: &KnowledgeBase,
    config: &FilterConfig,
    detector: &dyn ClaimDetector,
) -> Result<FilterOutcome> {
    config.validate()?;
    let mut kb = kb.clone();
    let before = kb.len();
    let mut decisions = Vec::with_capacity(normalized.len());
    let mut kept = Vec::new();
    for n in normalized {
        let reasons = quality_filter(&n.example, &n.outcomes, config, detector)?;
        decisions.push((n.example.id.clone(), reasons.clone()));
        if reasons.is_empty() {
            kept.push(n);
        }
    }
    for n in &mut kept {
        let ex = &mut n.example;
        let facts: Vec<(usize, (String, String))> = ex
            .spans
            .spans
            .iter()
            .enumerate()
            .filter(|(_, s)| s.grounding == Grounding::Others)
            .map(|(i, s)| (i, (ex.topic.clone(), ex.span_text(s))))
            .collect();
        let ids = expand_kb(&mut kb, &facts.iter().map(|(_, f)| f.clone()).collect::<Vec<_>>())?;
        for ((i, _), id) in facts.iter().zip(ids) {
            ex.spans.spans[*i].grounding = Grounding::Variable(id);
        }
        ex.variables = grounded_variables(&ex.spans.spans);
        debug_assert!(n
            .outcomes
            .iter()
            .enumerate()
            .all(|(i, o)| variable_key(ex, i, o).starts_with("id:")));
    }
    let added_variables = kb.variables()[before..].iter().map(|v| v.id.clone()).collect();
    Ok(FilterOutcome {
        kept: kept.into_iter().map(|n| n.example).collect(),
        kb,
        decisions,
        added_variables,
    })
}
