//! Multi-label scheme F1.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::ArgumentScheme;
use crate::error::{Error, Result};
use crate::grounder::Counts;

/// Per-label decision counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeCounts {
    pub per_scheme: [Counts; ArgumentScheme::COUNT],
}

impl SchemeCounts {
    pub fn add(&mut self, pred: &BTreeSet<ArgumentScheme>, gold: &BTreeSet<ArgumentScheme>) {
        for s in ArgumentScheme::ALL {
            let c = &mut self.per_scheme[s.index()];
            let (p, g) = (pred.contains(&s), gold.contains(&s));
            c.predicted += p as usize;
            c.gold += g as usize;
            c.tp += (p && g) as usize;
        }
    }

    /// Sum over labels, for micro averaging.
    pub fn micro(&self) -> Counts {
        self.per_scheme.iter().fold(Counts::default(), |a, c| Counts {
            tp: a.tp + c.tp,
            predicted: a.predicted + c.predicted,
            gold: a.gold + c.gold,
        })
    }

    pub fn f1(&self) -> SchemeF1 {
        SchemeF1 {
            per_scheme: self.per_scheme.map(|c| c.f1()),
            overall: self.micro().f1(),
        }
    }
}

/// Per-scheme F1 (indexed like [`ArgumentScheme::ALL`]) and micro F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeF1 {
    pub per_scheme: [f64; ArgumentScheme::COUNT],
    pub overall: f64,
}

impl SchemeF1 {
    pub fn get(&self, scheme: ArgumentScheme) -> f64 {
        self.per_scheme[scheme.index()]
    }
}

pub fn scheme_f1(preds: &[BTreeSet<ArgumentScheme>], golds: &[BTreeSet<ArgumentScheme>]) -> Result<SchemeF1> {
    if preds.len() != golds.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} gold label sets",
            preds.len(),
            golds.len()
        )));
    }
    let mut counts = SchemeCounts::default();
    for (p, g) in preds.iter().zip(golds) {
        counts.add(p, g);
    }
    Ok(counts.f1())
}
