//! Special tokens, encoder input layout, control prefixes and templates.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, ArgumentScheme, Stance};
use crate::error::{Error, Result};

pub const MAX_VARIABLES: usize = 4;
pub const PATTERN: &str = "<pattern>";
pub const ARGUMENT: &str = "<argument>";
pub const EOS: &str = "<eos>";

/// The 13 tokens added to the base vocabulary: five scheme codes, two
/// stance codes, four variable ids and two decoder BOS tokens.
pub const SPECIAL_TOKENS: [&str; 13] = [
    "<from_consequence>",
    "<from_source_authority>",
    "<from_source_knowledge>",
    "<goal_from_means/means_for_goal>",
    "<rule_or_principle>",
    "<pro>",
    "<con>",
    "<VAR_0>",
    "<VAR_1>",
    "<VAR_2>",
    "<VAR_3>",
    PATTERN,
    ARGUMENT,
];

pub fn variable_token(x: usize) -> &'static str {
    SPECIAL_TOKENS[7 + x]
}

/// Position `X` of a `<VAR_X>` token, for any `X`.
pub fn placeholder_index(token: &str) -> Option<usize> {
    token.strip_prefix("<VAR_")?.strip_suffix('>')?.parse().ok()
}

/// Splits text into tokens, keeping special tokens and `<VAR_X>` atomic and
/// lowercasing everything else.
pub fn tokenize_with_specials(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let next = rest.find('<');
        let (plain, tail) = rest.split_at(next.unwrap_or(rest.len()));
        out.extend(tokenize(plain).tokens.into_iter().map(|t| t.to_lowercase()));
        if tail.is_empty() {
            break;
        }
        let special = tail.find('>').map(|end| &tail[..=end]).filter(|cand| {
            SPECIAL_TOKENS.contains(cand) || placeholder_index(cand).is_some() || *cand == EOS
        });
        match special {
            Some(tok) => {
                out.push(tok.to_string());
                rest = &tail[tok.len()..];
            }
            None => {
                out.push("<".to_string());
                rest = &tail[1..];
            }
        }
    }
    out
}

pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// Topic plus up to four variables, each prefixed with its positional
/// `<VAR_X>` id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderInput {
    pub topic: String,
    /// Variable texts in encoder order; entry `X` follows `<VAR_X>`.
    pub variables: Vec<String>,
    /// `permutation[X]` is the index of the variable at position `X` in the
    /// caller's list.
    pub permutation: Vec<usize>,
}

impl EncoderInput {
    /// Orders `variables` by a permutation drawn from `seed`.
    pub fn build(topic: &str, variables: &[String], seed: u64) -> Result<Self> {
        let mut perm: Vec<usize> = (0..variables.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self::with_permutation(topic, variables, perm)
    }

    pub fn with_permutation(topic: &str, variables: &[String], permutation: Vec<usize>) -> Result<Self> {
        if variables.is_empty() || variables.len() > MAX_VARIABLES {
            return Err(Error::validation(format!(
                "expected 1..={MAX_VARIABLES} variables, got {}",
                variables.len()
            )));
        }
        let mut sorted = permutation.clone();
        sorted.sort_unstable();
        if sorted != (0..variables.len()).collect::<Vec<_>>() {
            return Err(Error::validation("ordering is not a permutation of the variables"));
        }
        Ok(EncoderInput {
            topic: topic.to_string(),
            variables: permutation.iter().map(|&i| variables[i].clone()).collect(),
            permutation,
        })
    }

    /// Encoder position of the caller's variable `original`.
    pub fn position_of(&self, original: usize) -> Option<usize> {
        self.permutation.iter().position(|&p| p == original)
    }

    pub fn tokens(&self) -> Vec<String> {
        let mut out = tokenize_with_specials(&self.topic);
        for (x, v) in self.variables.iter().enumerate() {
            out.push(variable_token(x).to_string());
            out.extend(tokenize_with_specials(v));
        }
        out
    }
}

impl fmt::Display for EncoderInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.topic)?;
        for (x, v) in self.variables.iter().enumerate() {
            write!(f, " {} {v}", variable_token(x))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mono,
    Dual,
    Stance,
    Scheme,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Mono, Variant::Dual, Variant::Stance, Variant::Scheme];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mono => "mono",
            Variant::Dual => "dual",
            Variant::Stance => "stance",
            Variant::Scheme => "scheme",
        }
    }

    pub fn uses_stance(self) -> bool {
        self != Variant::Scheme
    }

    pub fn uses_scheme(self) -> bool {
        self != Variant::Stance
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown generator variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Mono and ablations, or the template phase of Dual.
    First,
    /// Argument phase of Dual; the prefix is the template.
    Second,
}

/// Decoder context tokens forced before generation.
pub fn build_control_prefix(
    variant: Variant,
    stance: Option<Stance>,
    scheme: Option<ArgumentScheme>,
    phase: Phase,
    template: Option<&[String]>,
) -> Result<Vec<String>> {
    if phase == Phase::Second {
        if variant != Variant::Dual {
            return Err(Error::validation("only the dual variant has a second phase"));
        }
        let template = template.ok_or_else(|| Error::validation("second phase needs a template"))?;
        let mut out = template.to_vec();
        out.push(ARGUMENT.to_string());
        return Ok(out);
    }
    let mut out = Vec::with_capacity(3);
    if variant.uses_stance() {
        let stance = stance.ok_or_else(|| Error::validation(format!("{variant} needs a stance")))?;
        out.push(stance.control_token().to_string());
    }
    if variant.uses_scheme() {
        let scheme = scheme.ok_or_else(|| Error::validation(format!("{variant} needs a scheme")))?;
        let code = scheme
            .control_token()
            .ok_or_else(|| Error::validation("the `others` scheme has no control code"))?;
        out.push(code.to_string());
    }
    out.push(if variant == Variant::Dual { PATTERN } else { ARGUMENT }.to_string());
    Ok(out)
}

/// Replaces every `<VAR_X>` with variable `X` of `input`.
pub fn substitute_template(template: &str, input: &EncoderInput) -> Result<String> {
    let tokens = tokenize_with_specials(template);
    let unknown: Vec<&String> = tokens
        .iter()
        .filter(|t| placeholder_index(t).is_some_and(|x| x >= input.variables.len()))
        .collect();
    if !unknown.is_empty() {
        let list: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
        return Err(Error::validation(format!("unknown placeholders: {}", list.join(", "))));
    }
    let out: Vec<String> = tokens
        .iter()
        .map(|t| match placeholder_index(t) {
            Some(x) => input.variables[x].clone(),
            None => t.clone(),
        })
        .collect();
    Ok(out.join(" "))
}

/// Placeholders in `template` that do not name a supplied variable, and
/// supplied variables the template never mentions.
pub fn template_flags(template: &[String], n_variables: usize) -> (Vec<String>, Vec<usize>) {
    let unknown = template
        .iter()
        .filter(|t| placeholder_index(t).is_some_and(|x| x >= n_variables))
        .cloned()
        .collect();
    let omitted = (0..n_variables)
        .filter(|&x| !template.iter().any(|t| placeholder_index(t) == Some(x)))
        .collect();
    (unknown, omitted)
}
