//! Word-level vocabularies built over reference tokens.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// `specials` come first in the given order (`<unk>` is added if
    /// missing), followed by the sorted distinct `words`.
    pub fn build<'a>(specials: &[&str], words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens: Vec<String> = Vec::new();
        if !specials.contains(&UNK) {
            tokens.push(UNK.to_string());
        }
        tokens.extend(specials.iter().map(|s| s.to_string()));
        let special_set: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        let words: BTreeSet<&str> = words
            .into_iter()
            .filter(|w| !special_set.contains(w))
            .collect();
        let words: Vec<String> = words.into_iter().map(str::to_string).collect();
        tokens.extend(words);
        Vocab::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or_else(|| self.index[UNK])
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Lower-cased reference tokens of `text`.
pub fn words(text: &str) -> Vec<String> {
    crate::corpus::tokenize(text)
        .tokens
        .into_iter()
        .map(|t| t.to_lowercase())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_first_then_sorted_words() {
        let v = Vocab::build(&["<s>"], ["b", "a", "<s>", "b"]);
        assert_eq!(v.tokens(), ["<unk>", "<s>", "a", "b"]);
        assert_eq!(v.id("zzz"), 0);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
    }
}
