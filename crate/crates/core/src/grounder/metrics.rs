//! Span detection F1 in three modes and span grounding accuracy.

use serde::{Deserialize, Serialize};

use crate::corpus::{encode_bio, BioTag, Channel, SpanLabeling};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanMode {
    /// A predicted span counts when at least half of its tokens fall inside
    /// the gold span.
    Partial,
    /// A predicted span counts only when its boundaries equal the gold span.
    Full,
    /// Token-level F1 over the collapsed BIO labels.
    Overall,
}

impl SpanMode {
    pub const ALL: [SpanMode; 3] = [SpanMode::Partial, SpanMode::Full, SpanMode::Overall];
}

/// True positives against predicted and gold totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.tp as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.tp as f64 / self.gold as f64
        }
    }

    /// `2PR / (P + R)`; 1.0 when there is nothing to predict and nothing was
    /// predicted, 0.0 when `P + R = 0` otherwise.
    pub fn f1(&self) -> f64 {
        if self.predicted == 0 && self.gold == 0 {
            return 1.0;
        }
        if self.tp == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / (self.predicted + self.gold) as f64
    }

    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }
}

/// Greedy one-to-one matching of predicted to gold spans, largest overlap
/// first. Returns `(gold index, predicted index)` pairs.
pub fn match_spans(pred: &SpanLabeling, gold: &SpanLabeling, mode: SpanMode) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (gi, g) in gold.spans.iter().enumerate() {
        for (pi, p) in pred.spans.iter().enumerate() {
            let overlap = p.overlap(g);
            let ok = match mode {
                SpanMode::Partial => overlap > 0 && 2 * overlap >= p.len(),
                SpanMode::Full | SpanMode::Overall => p.start == g.start && p.end == g.end,
            };
            if ok {
                candidates.push((overlap, gi, pi));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gold_used = vec![false; gold.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for (_, gi, pi) in candidates {
        if !gold_used[gi] && !pred_used[pi] {
            gold_used[gi] = true;
            pred_used[pi] = true;
            pairs.push((gi, pi));
        }
    }
    pairs.sort();
    pairs
}

pub fn span_counts(
    pred: &SpanLabeling,
    gold: &SpanLabeling,
    token_count: usize,
    mode: SpanMode,
) -> Result<Counts> {
    pred.validate(token_count)?;
    gold.validate(token_count)?;
    Ok(match mode {
        SpanMode::Partial | SpanMode::Full => Counts {
            tp: match_spans(pred, gold, mode).len(),
            predicted: pred.len(),
            gold: gold.len(),
        },
        SpanMode::Overall => {
            let p = encode_bio(pred, token_count, &Channel::All)?;
            let g = encode_bio(gold, token_count, &Channel::All)?;
            let mut c = Counts::default();
            for (a, b) in p.iter().zip(&g) {
                c.predicted += usize::from(*a != BioTag::O);
                c.gold += usize::from(*b != BioTag::O);
                c.tp += usize::from(*b != BioTag::O && a == b);
            }
            c
        }
    })
}

pub fn span_f1(pred: &SpanLabeling, gold: &SpanLabeling, token_count: usize, mode: SpanMode) -> Result<f64> {
    Ok(span_counts(pred, gold, token_count, mode)?.f1())
}

/// Fraction of partially matched spans whose groundings agree; 0.0 when
/// nothing matched.
pub fn grounding_accuracy(pred: &SpanLabeling, gold: &SpanLabeling) -> f64 {
    let (agree, matched) = grounding_counts(pred, gold);
    if matched == 0 {
        0.0
    } else {
        agree as f64 / matched as f64
    }
}

pub fn grounding_counts(pred: &SpanLabeling, gold: &SpanLabeling) -> (usize, usize) {
    let pairs = match_spans(pred, gold, SpanMode::Partial);
    let agree = pairs
        .iter()
        .filter(|&&(gi, pi)| gold.spans[gi].grounding == pred.spans[pi].grounding)
        .count();
    (agree, pairs.len())
}

/// Corpus-level accumulator (micro-averaged over examples).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpanEvaluation {
    pub partial: Counts,
    pub full: Counts,
    pub overall: Counts,
    pub matched: usize,
    pub grounding_agree: usize,
    pub exact_examples: usize,
    pub examples: usize,
}

impl SpanEvaluation {
    pub fn add(
        &mut self,
        pred: &SpanLabeling,
        pred_tokens: usize,
        gold: &SpanLabeling,
        gold_tokens: usize,
    ) -> Result<()> {
        if pred_tokens != gold_tokens {
            return Err(Error::validation(format!(
                "prediction covers {pred_tokens} tokens but gold covers {gold_tokens}"
            )));
        }
        self.partial.add(span_counts(pred, gold, gold_tokens, SpanMode::Partial)?);
        self.full.add(span_counts(pred, gold, gold_tokens, SpanMode::Full)?);
        self.overall.add(span_counts(pred, gold, gold_tokens, SpanMode::Overall)?);
        let (agree, matched) = grounding_counts(pred, gold);
        self.grounding_agree += agree;
        self.matched += matched;
        self.examples += 1;
        if pred.clone().sorted() == gold.clone().sorted() {
            self.exact_examples += 1;
        }
        Ok(())
    }

    pub fn f1(&self, mode: SpanMode) -> f64 {
        match mode {
            SpanMode::Partial => self.partial.f1(),
            SpanMode::Full => self.full.f1(),
            SpanMode::Overall => self.overall.f1(),
        }
    }

    pub fn grounding_accuracy(&self) -> f64 {
        if self.matched == 0 {
            0.0
        } else {
            self.grounding_agree as f64 / self.matched as f64
        }
    }

    pub fn report(&self) -> SpanReport {
        SpanReport {
            partial_f1: self.f1(SpanMode::Partial),
            full_f1: self.f1(SpanMode::Full),
            overall_f1: self.f1(SpanMode::Overall),
            grounding_accuracy: self.grounding_accuracy(),
            exact_match: if self.examples == 0 {
                0.0
            } else {
                self.exact_examples as f64 / self.examples as f64
            },
        }
    }
}

/// Metrics report record: F1 per mode plus grounding accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub partial_f1: f64,
    pub full_f1: f64,
    pub overall_f1: f64,
    pub grounding_accuracy: f64,
    pub exact_match: f64,
}
