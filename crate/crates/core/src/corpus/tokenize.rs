use serde::{Deserialize, Serialize};

/// Text split by the reference tokenizer, with per-token character ranges.
///
/// Offsets count Unicode scalar values, not bytes, and are half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub raw: String,
    pub tokens: Vec<String>,
    pub offsets: Vec<(usize, usize)>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Whitespace-plus-punctuation splitting: runs of word characters form one
/// token, every other non-space character is a token on its own.
pub fn tokenize(raw: &str) -> TokenizedText {
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (pos, c) in raw.chars().enumerate() {
        if is_word_char(c) {
            if current.is_empty() {
                start = pos;
            }
            current.push(c);
            continue;
        }
        if !current.is_empty() {
            offsets.push((start, pos));
            tokens.push(std::mem::take(&mut current));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
            offsets.push((pos, pos + 1));
        }
    }
    if !current.is_empty() {
        let end = start + current.chars().count();
        offsets.push((start, end));
        tokens.push(current);
    }
    TokenizedText {
        raw: raw.to_string(),
        tokens,
        offsets,
    }
}

impl TokenizedText {
    pub fn new(raw: &str) -> Self {
        tokenize(raw)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Maps a half-open character range to the half-open range of tokens it
    /// touches. `None` if no token intersects the range.
    pub fn char_to_token_span(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        let mut first = None;
        let mut last = None;
        for (i, &(s, e)) in self.offsets.iter().enumerate() {
            if s < end && start < e {
                first.get_or_insert(i);
                last = Some(i);
            }
        }
        Some((first?, last? + 1))
    }

    /// Character range covered by tokens `start..end`.
    pub fn token_to_char_span(&self, start: usize, end: usize) -> (usize, usize) {
        (self.offsets[start].0, self.offsets[end - 1].1)
    }

    /// Substring of `raw` by character range.
    pub fn char_slice(&self, start: usize, end: usize) -> String {
        self.raw.chars().skip(start).take(end - start).collect()
    }

    /// Raw text covered by tokens `start..end`.
    pub fn token_text(&self, start: usize, end: usize) -> String {
        let (s, e) = self.token_to_char_span(start, end);
        self.char_slice(s, e)
    }
}
