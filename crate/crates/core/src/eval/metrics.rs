//! Corpus BLEU and Rouge-L over token sequences.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BleuConfig {
    pub max_order: usize,
    /// Added to an order's match count when it has candidate n-grams but
    /// no matches.
    pub epsilon: f64,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_order: 4,
            epsilon: 1e-9,
        }
    }
}

/// Corpus-level n-gram statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BleuStats {
    /// Clipped matches per order (index 0 is unigrams).
    pub matches: Vec<usize>,
    /// Candidate n-grams per order.
    pub totals: Vec<usize>,
    pub candidate_length: usize,
    pub reference_length: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub fn bleu_stats(candidates: &[Vec<String>], references: &[Vec<String>], max_order: usize) -> Result<BleuStats> {
    if candidates.len() != references.len() {
        return Err(Error::validation(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::validation("BLEU needs at least one pair"));
    }
    let mut stats = BleuStats {
        matches: vec![0; max_order],
        totals: vec![0; max_order],
        ..Default::default()
    };
    for (cand, reference) in candidates.iter().zip(references) {
        stats.candidate_length += cand.len();
        stats.reference_length += reference.len();
        for n in 1..=max_order {
            let c = ngram_counts(cand, n);
            let r = ngram_counts(reference, n);
            stats.totals[n - 1] += c.values().sum::<usize>();
            stats.matches[n - 1] += c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
    }
    Ok(stats)
}

impl BleuStats {
    /// Geometric mean of modified precisions times the brevity penalty.
    ///
    /// Orders without any candidate n-gram are left out of the mean; a
    /// corpus without unigram matches scores exactly zero.
    pub fn score(&self, epsilon: f64) -> f64 {
        if self.candidate_length == 0 || self.matches.first().is_none_or(|&m| m == 0) {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if t == 0 {
                continue;
            }
            let m = if m == 0 { epsilon } else { m as f64 };
            log_sum += (m / t as f64).ln();
            orders += 1;
        }
        let c = self.candidate_length as f64;
        let r = self.reference_length as f64;
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        bp * (log_sum / orders as f64).exp()
    }
}

pub fn corpus_bleu(candidates: &[Vec<String>], references: &[Vec<String>], config: &BleuConfig) -> Result<f64> {
    Ok(bleu_stats(candidates, references, config.max_order)?.score(config.epsilon))
}

pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with equal weight on precision and recall.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::validation("Rouge-L needs non-empty sequences"));
    }
    let lcs = lcs_length(candidate, reference);
    if lcs == 0 {
        return Ok(0.0);
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    Ok(2.0 * p * r / (p + r))
}
