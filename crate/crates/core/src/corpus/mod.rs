//! Canonical data types shared by every stage: label sets, the knowledge
//! base, span labelings and annotated examples.

mod bio;
pub(crate) mod io;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bio::{decode_bio, decode_bio_strict, encode_bio, BioTag, Channel};
pub use io::{
    read_corpus, read_kb, write_corpus, write_kb, CorpusReader, CorpusRecord,
};
pub use tokenize::{tokenize, TokenizedText};

/// Reserved grounding id for spans unrelated to any KB variable.
pub const OTHERS: &str = "OTHERS";

/// Walton argument schemes, with Goal-from-Means merged into Means-for-Goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArgumentScheme {
    FromConsequence,
    FromSourceAuthority,
    FromSourceKnowledge,
    GoalFromMeansMeansForGoal,
    RuleOrPrinciple,
    Others,
}

impl ArgumentScheme {
    pub const ALL: [ArgumentScheme; 6] = [
        ArgumentScheme::FromConsequence,
        ArgumentScheme::FromSourceAuthority,
        ArgumentScheme::FromSourceKnowledge,
        ArgumentScheme::GoalFromMeansMeansForGoal,
        ArgumentScheme::RuleOrPrinciple,
        ArgumentScheme::Others,
    ];

    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ArgumentScheme::FromConsequence => "from_consequence",
            ArgumentScheme::FromSourceAuthority => "from_source_authority",
            ArgumentScheme::FromSourceKnowledge => "from_source_knowledge",
            ArgumentScheme::GoalFromMeansMeansForGoal => "goal_from_means_means_for_goal",
            ArgumentScheme::RuleOrPrinciple => "rule_or_principle",
            ArgumentScheme::Others => "others",
        }
    }

    /// Generation control code. `Others` has none.
    pub fn control_token(self) -> Option<&'static str> {
        match self {
            ArgumentScheme::FromConsequence => Some("<from_consequence>"),
            ArgumentScheme::FromSourceAuthority => Some("<from_source_authority>"),
            ArgumentScheme::FromSourceKnowledge => Some("<from_source_knowledge>"),
            ArgumentScheme::GoalFromMeansMeansForGoal => {
                Some("<goal_from_means/means_for_goal>")
            }
            ArgumentScheme::RuleOrPrinciple => Some("<rule_or_principle>"),
            ArgumentScheme::Others => None,
        }
    }
}

impl fmt::Display for ArgumentScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArgumentScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown argument scheme `{s}`")))
    }
}

impl Serialize for ArgumentScheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ArgumentScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stance {
    Pro,
    Con,
}

impl Stance {
    pub const ALL: [Stance; 2] = [Stance::Pro, Stance::Con];

    pub fn name(self) -> &'static str {
        match self {
            Stance::Pro => "pro",
            Stance::Con => "con",
        }
    }

    pub fn control_token(self) -> &'static str {
        match self {
            Stance::Pro => "<pro>",
            Stance::Con => "<con>",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Stance::Pro => Stance::Con,
            Stance::Con => Stance::Pro,
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pro" => Ok(Stance::Pro),
            "con" => Ok(Stance::Con),
            _ => Err(Error::validation(format!("unknown stance `{s}`"))),
        }
    }
}

impl Serialize for Stance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Stance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    #[serde(rename = "seed-kb")]
    SeedKb,
    #[serde(rename = "expanded")]
    Expanded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactVariable {
    pub id: String,
    pub text: String,
    pub topic: String,
    pub origin: Origin,
}

/// Inventory of fact variables. Entries are append-only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    variables: Vec<FactVariable>,
    by_id: HashMap<String, usize>,
}

impl KnowledgeBase {
    pub fn new(variables: Vec<FactVariable>) -> Result<Self> {
        let mut kb = KnowledgeBase::default();
        for v in variables {
            kb.insert(v)?;
        }
        Ok(kb)
    }

    pub fn insert(&mut self, var: FactVariable) -> Result<()> {
        if var.text.trim().is_empty() {
            return Err(Error::validation(format!("variable `{}` has empty text", var.id)));
        }
        if var.id == OTHERS {
            return Err(Error::validation("`OTHERS` is reserved and cannot be a KB id"));
        }
        if self.by_id.contains_key(&var.id) {
            return Err(Error::validation(format!("duplicate variable id `{}`", var.id)));
        }
        self.by_id.insert(var.id.clone(), self.variables.len());
        self.variables.push(var);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&FactVariable> {
        self.by_id.get(id).map(|&i| &self.variables[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn variables(&self) -> &[FactVariable] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn topic<'a>(&'a self, topic: &'a str) -> impl Iterator<Item = &'a FactVariable> + 'a {
        self.variables.iter().filter(move |v| v.topic == topic)
    }

    pub fn topics(&self) -> BTreeSet<&str> {
        self.variables.iter().map(|v| v.topic.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Grounding {
    Variable(String),
    Others,
}

impl Grounding {
    pub fn from_id(id: &str) -> Self {
        if id == OTHERS {
            Grounding::Others
        } else {
            Grounding::Variable(id.to_string())
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Grounding::Variable(id) => id,
            Grounding::Others => OTHERS,
        }
    }
}

/// Token span `start..end` with its grounding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub grounding: Grounding,
}

impl Span {
    pub fn new(start: usize, end: usize, grounding: Grounding) -> Self {
        Span {
            start,
            end,
            grounding,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &Span) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }
}

/// Non-overlapping token spans, kept sorted by start.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SpanLabeling {
    pub spans: Vec<Span>,
}

impl SpanLabeling {
    pub fn new(mut spans: Vec<Span>, token_count: usize) -> Result<Self> {
        spans.sort();
        let labeling = SpanLabeling { spans };
        labeling.validate(token_count)?;
        Ok(labeling)
    }

    pub fn empty() -> Self {
        SpanLabeling::default()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    /// Checks range (`Error::Range`) then overlap (`Error::Validation`).
    pub fn validate(&self, token_count: usize) -> Result<()> {
        for s in &self.spans {
            if s.start >= s.end || s.end > token_count {
                return Err(Error::Range(format!(
                    "span {}..{} outside 0..{token_count} or empty",
                    s.start, s.end
                )));
            }
        }
        let mut sorted: Vec<&Span> = self.spans.iter().collect();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[1].start < w[0].end {
                return Err(Error::validation(format!(
                    "spans {}..{} and {}..{} overlap",
                    w[0].start, w[0].end, w[1].start, w[1].end
                )));
            }
        }
        Ok(())
    }

    /// Same spans with every grounding replaced by `Others`.
    pub fn erase_groundings(&self) -> Self {
        SpanLabeling {
            spans: self
                .spans
                .iter()
                .map(|s| Span::new(s.start, s.end, Grounding::Others))
                .collect(),
        }
    }

    pub fn sorted(mut self) -> Self {
        self.spans.sort();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "p1-human")]
    P1Human,
    #[serde(rename = "p1-auto")]
    P1Auto,
    #[serde(rename = "pc-auto")]
    PcAuto,
    #[serde(rename = "fixture")]
    Fixture,
}

/// One argument with its topic, stance, schemes and grounded spans.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedExample {
    pub id: String,
    pub topic: String,
    pub argument: TokenizedText,
    pub stance: Stance,
    pub schemes: BTreeSet<ArgumentScheme>,
    pub scheme_probs: Option<[f64; ArgumentScheme::COUNT]>,
    pub spans: SpanLabeling,
    pub variables: Vec<String>,
    pub provenance: Provenance,
}

impl AnnotatedExample {
    /// Checks the invariants that need no KB.
    pub fn validate(&self) -> Result<()> {
        self.spans.validate(self.argument.len())?;
        let mut seen = BTreeSet::new();
        for v in &self.variables {
            if !seen.insert(v.as_str()) {
                return Err(Error::validation(format!(
                    "example `{}` lists variable `{v}` twice",
                    self.id
                )));
            }
        }
        if let Some(probs) = &self.scheme_probs {
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::validation(format!(
                    "example `{}` has a scheme probability outside [0, 1]",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Checks that every grounding resolves in `kb` or is `OTHERS`.
    pub fn validate_against(&self, kb: &KnowledgeBase) -> Result<()> {
        self.validate()?;
        for s in &self.spans.spans {
            if let Grounding::Variable(id) = &s.grounding {
                if !kb.contains(id) {
                    return Err(Error::validation(format!(
                        "example `{}` grounds a span to unknown variable `{id}`",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn span_text(&self, span: &Span) -> String {
        self.argument.token_text(span.start, span.end)
    }

    pub fn scheme_prob_map(&self) -> Option<BTreeMap<String, f64>> {
        self.scheme_probs.map(|p| {
            ArgumentScheme::ALL
                .iter()
                .map(|s| (s.name().to_string(), p[s.index()]))
                .collect()
        })
    }

    /// First listed scheme usable as a generation control code.
    pub fn primary_scheme(&self) -> Option<ArgumentScheme> {
        self.schemes
            .iter()
            .copied()
            .find(|s| *s != ArgumentScheme::Others)
    }

    pub fn word_count(&self) -> usize {
        self.argument.len()
    }
}
