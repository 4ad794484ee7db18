//! Natural-language inference interface and a rule-based stand-in.

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliJudgement {
    pub entail: f64,
    pub contradict: f64,
    pub neutral: f64,
}

impl NliJudgement {
    pub fn new(entail: f64, contradict: f64, neutral: f64) -> Result<Self> {
        let j = NliJudgement { entail, contradict, neutral };
        let sum = entail + contradict + neutral;
        if [entail, contradict, neutral].iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!("not a distribution: {j:?}")));
        }
        Ok(j)
    }
}

pub trait NliProvider {
    fn name(&self) -> &str;
    fn judge(&self, premise: &str, hypothesis: &str) -> Result<NliJudgement>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NliFlags {
    pub entails: bool,
    pub contradicts: bool,
}

pub fn entail_contra(original: &str, generated: &str, provider: &dyn NliProvider, threshold: f64) -> Result<NliFlags> {
    let j = provider.judge(original, generated)?;
    Ok(NliFlags {
        entails: j.entail >= threshold,
        contradicts: j.contradict >= threshold,
    })
}

/// Always returns the same judgement.
#[derive(Debug, Clone, Copy)]
pub struct FixedNli(pub NliJudgement);

impl NliProvider for FixedNli {
    fn name(&self) -> &str {
        "fixed"
    }

    fn judge(&self, _: &str, _: &str) -> Result<NliJudgement> {
        Ok(self.0)
    }
}

const NEGATIONS: [&str; 9] = ["not", "no", "never", "nothing", "cannot", "without", "nor", "none", "n't"];

const ANTONYMS: [(&str, &str); 14] = [
    ("increase", "decrease"),
    ("increases", "decreases"),
    ("reduce", "increase"),
    ("reduces", "increases"),
    ("good", "bad"),
    ("safe", "dangerous"),
    ("effective", "ineffective"),
    ("legal", "illegal"),
    ("support", "oppose"),
    ("supports", "opposes"),
    ("improve", "harm"),
    ("improves", "harms"),
    ("benefit", "harm"),
    ("protects", "violates"),
];

/// Negation and antonym heuristics over lowercase word overlap.
///
/// Coverage `o` is the fraction of the hypothesis's content words found in
/// the premise, directly or as an antonym of a premise word. Without a polarity conflict the judgement is
/// (0.9·o, 0, 1 − 0.9·o); with one it is (0, 0.9·o, 1 − 0.9·o).
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleNli;

fn words(text: &str) -> Vec<String> {
    tokenize(text).tokens.into_iter().map(|t| t.to_lowercase()).collect()
}

impl NliProvider for RuleNli {
    fn name(&self) -> &str {
        "rule-nli"
    }

    fn judge(&self, premise: &str, hypothesis: &str) -> Result<NliJudgement> {
        let p = words(premise);
        let h = words(hypothesis);
        let is_neg = |w: &String| NEGATIONS.contains(&w.as_str());
        let negations = |ws: &[String]| ws.iter().filter(|w| is_neg(w)).count();
        let has = |ws: &[String], w: &str| ws.iter().any(|x| x == w);
        // hypothesis words standing in for a premise word by antonymy
        let opposed: Vec<&str> = ANTONYMS
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .filter(|&(a, b)| has(&p, a) && has(&h, b))
            .map(|(_, b)| b)
            .collect();
        let antonym = !opposed.is_empty();
        let conflict = (negations(&p) % 2 != negations(&h) % 2) != antonym;
        let content: Vec<&String> = h.iter().filter(|w| !is_neg(w)).collect();
        let coverage = if content.is_empty() {
            0.0
        } else {
            content
                .iter()
                .filter(|w| p.contains(w) || opposed.contains(&w.as_str()))
                .count() as f64 / content.len() as f64
        };
        let strength = 0.9 * coverage;
        if conflict {
            NliJudgement::new(0.0, strength, 1.0 - strength)
        } else {
            NliJudgement::new(strength, 0.0, 1.0 - strength)
        }
    }
}
