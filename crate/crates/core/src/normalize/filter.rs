//! Scheme-probability and quality filters, and the claim detector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::SpanOutcome;
use crate::corpus::{AnnotatedExample, ArgumentScheme, Grounding};
use crate::error::{Error, Result};
use crate::vocab::words;

use super::cluster::SLACK;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub direct_threshold: f64,
    pub scheme_prob_factor: f64,
    pub max_unnormalized_fraction: f64,
    pub max_words: usize,
    pub variables_per_example: [usize; 2],
    pub occurrences_per_variable: [usize; 2],
    pub community_threshold: f64,
    pub min_community_size: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            direct_threshold: 0.85,
            scheme_prob_factor: 0.20,
            max_unnormalized_fraction: 0.30,
            max_words: 150,
            variables_per_example: [1, 4],
            occurrences_per_variable: [2, 4],
            community_threshold: 0.75,
            min_community_size: 2,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("direct_threshold", self.direct_threshold),
            ("scheme_prob_factor", self.scheme_prob_factor),
            ("max_unnormalized_fraction", self.max_unnormalized_fraction),
            ("community_threshold", self.community_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        for (name, [lo, hi]) in [
            ("variables_per_example", self.variables_per_example),
            ("occurrences_per_variable", self.occurrences_per_variable),
        ] {
            if lo > hi {
                return Err(Error::Config(format!("{name} lower bound {lo} above upper bound {hi}")));
            }
        }
        Ok(())
    }
}

/// Decides whether a text contains at least one claim.
pub trait ClaimDetector {
    fn has_claim(&self, text: &str) -> bool;
}

/// Always answers the same.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClaims(pub bool);

impl ClaimDetector for ConstantClaims {
    fn has_claim(&self, _: &str) -> bool {
        self.0
    }
}

/// A sentence is a claim when it contains a modal or a stance-bearing verb.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleClaims;

/// Cue words of [`RuleClaims`].
pub const CLAIM_CUES: &[&str] = &[
    "should", "shouldn", "must", "ought", "need", "needs", "cannot", "can't", "will", "would", "believe",
    "think", "argue", "support", "supports", "oppose", "opposes", "abolish", "ban", "allow", "violate",
    "violates", "cause", "causes", "lead", "leads", "reduce", "reduces", "increase", "increases",
    "prevent", "prevents", "protect", "protects", "harm", "harms", "deter", "deters", "help", "helps",
];

impl ClaimDetector for RuleClaims {
    fn has_claim(&self, text: &str) -> bool {
        text.split(['.', '!', '?', ';'])
            .any(|sentence| words(sentence).iter().any(|w| CLAIM_CUES.contains(&w.as_str())))
    }
}

/// Mean probability per scheme over `examples`.
pub fn scheme_means(examples: &[AnnotatedExample]) -> Result<[f64; ArgumentScheme::COUNT]> {
    let mut sums = [0.0; ArgumentScheme::COUNT];
    for e in examples {
        let p = e
            .scheme_probs
            .ok_or_else(|| Error::validation(format!("example `{}` has no scheme probabilities", e.id)))?;
        for (s, x) in sums.iter_mut().zip(p) {
            *s += x;
        }
    }
    let n = examples.len().max(1) as f64;
    Ok(sums.map(|s| s / n))
}

/// Highest-probability scheme; ties resolve to the earlier scheme.
pub fn top_scheme(probs: &[f64; ArgumentScheme::COUNT]) -> (ArgumentScheme, f64) {
    let mut best = 0;
    for i in 1..probs.len() {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    (ArgumentScheme::ALL[best], probs[best])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeFilterOutcome {
    pub means: [f64; ArgumentScheme::COUNT],
    pub kept: Vec<AnnotatedExample>,
    pub dropped_others: Vec<String>,
    pub dropped_low_probability: Vec<String>,
}

/// Keeps an example iff its top scheme is not `Others` and its probability
/// is at least `factor` times that scheme's corpus mean.
pub fn scheme_probability_filter(examples: Vec<AnnotatedExample>, factor: f64) -> Result<SchemeFilterOutcome> {
    let means = scheme_means(&examples)?;
    let mut out = SchemeFilterOutcome {
        means,
        kept: Vec::new(),
        dropped_others: Vec::new(),
        dropped_low_probability: Vec::new(),
    };
    for e in examples {
        let probs = e.scheme_probs.expect("checked by scheme_means");
        let (scheme, p) = top_scheme(&probs);
        if scheme == ArgumentScheme::Others {
            out.dropped_others.push(e.id);
        } else if p >= factor * means[scheme.index()] - SLACK {
            out.kept.push(e);
        } else {
            out.dropped_low_probability.push(e.id);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    UnnormalizedFraction,
    Length,
    VariableCount,
    VariableOccurrence,
    NoClaim,
}

impl DropReason {
    pub const ALL: [DropReason; 5] = [
        DropReason::UnnormalizedFraction,
        DropReason::Length,
        DropReason::VariableCount,
        DropReason::VariableOccurrence,
        DropReason::NoClaim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DropReason::UnnormalizedFraction => "unnormalized-fraction",
            DropReason::Length => "length",
            DropReason::VariableCount => "variable-count",
            DropReason::VariableOccurrence => "variable-occurrence",
            DropReason::NoClaim => "no-claim",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Key under which a span counts towards the variable rules: its variable
/// id, or its lowercased text when unmapped (it becomes a new variable on
/// expansion).
pub(crate) fn variable_key(example: &AnnotatedExample, span_index: usize, outcome: &SpanOutcome) -> String {
    let span = &example.spans.spans[span_index];
    match (&span.grounding, outcome.variable()) {
        (Grounding::Variable(id), _) => format!("id:{id}"),
        (Grounding::Others, Some(variable)) => format!("id:{variable}"),
        (Grounding::Others, None) => format!("text:{}", normalize_text(&example.span_text(span))),
    }
}

pub(crate) fn normalize_text(text: &str) -> String {
    words(text).join(" ")
}

/// Every rule `example` fails, in rule order. Empty means keep.
pub fn quality_filter(
    example: &AnnotatedExample,
    outcomes: &[SpanOutcome],
    config: &FilterConfig,
    detector: &dyn ClaimDetector,
) -> Result<Vec<DropReason>> {
    if outcomes.len() != example.spans.len() {
        return Err(Error::validation(format!(
            "example `{}` has {} spans but {} outcomes",
            example.id,
            example.spans.len(),
            outcomes.len()
        )));
    }
    let mut reasons = Vec::new();
    let unmapped = outcomes.iter().filter(|o| matches!(o, SpanOutcome::Unmapped)).count();
    if !outcomes.is_empty() && unmapped as f64 / outcomes.len() as f64 > config.max_unnormalized_fraction + SLACK {
        reasons.push(DropReason::UnnormalizedFraction);
    }
    if example.word_count() > config.max_words {
        reasons.push(DropReason::Length);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (i, o) in outcomes.iter().enumerate() {
        *counts.entry(variable_key(example, i, o)).or_default() += 1;
    }
    let [lo, hi] = config.variables_per_example;
    if counts.len() < lo || counts.len() > hi {
        reasons.push(DropReason::VariableCount);
    }
    let [lo, hi] = config.occurrences_per_variable;
    if counts.values().any(|&c| c < lo || c > hi) {
        reasons.push(DropReason::VariableOccurrence);
    }
    if !detector.has_claim(&example.argument.raw) {
        reasons.push(DropReason::NoClaim);
    }
    Ok(reasons)
}

/// Distinct reasons, for reports.
pub fn reason_counts<'a>(decisions: impl IntoIterator<Item = &'a Vec<DropReason>>) -> BTreeMap<String, usize> {
    let mut out: BTreeMap<String, usize> = DropReason::ALL.iter().map(|r| (r.name().to_string(), 0)).collect();
    for reasons in decisions {
        for r in reasons.iter().collect::<BTreeSet<_>>() {
            *out.get_mut(r.name()).expect("all reasons present") += 1;
        }
    }
    out
}
