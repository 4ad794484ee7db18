//! Text embedding providers.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::vocab::words;

/// Deterministic text embeddings with unit L2 norm.
pub trait EmbeddingProvider {
    fn name(&self) -> &str;
    fn width(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(mut v: Vec<f64>, text: &str) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::validation(format!("cannot embed `{text}`: zero vector")));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Feature-hashed bag of lowercased words. Each word adds +1 or -1 to one
/// bucket, both chosen from its SHA-256 digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBow {
    pub width: usize,
}

impl Default for HashedBow {
    fn default() -> Self {
        HashedBow { width: 256 }
    }
}

impl EmbeddingProvider for HashedBow {
    fn name(&self) -> &str {
        "hashed-bow"
    }

    fn width(&self) -> usize {
        self.width
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let ws = words(text);
        if ws.is_empty() {
            return Err(Error::validation("cannot embed empty text"));
        }
        let mut v = vec![0.0; self.width];
        for w in ws {
            let digest = Sha256::digest(w.as_bytes());
            let bucket = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) as usize % self.width;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        unit(v, text)
    }
}

/// Fixed text-to-vector table, normalized on insertion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableProvider {
    width: usize,
    table: HashMap<String, Vec<f64>>,
}

impl TableProvider {
    pub fn new(width: usize) -> Self {
        TableProvider {
            width,
            table: HashMap::new(),
        }
    }

    pub fn insert(&mut self, text: &str, v: Vec<f64>) -> Result<()> {
        if v.len() != self.width {
            return Err(Error::shape(format!("vector width {} != {}", v.len(), self.width)));
        }
        self.table.insert(text.to_string(), unit(v, text)?);
        Ok(())
    }
}

impl EmbeddingProvider for TableProvider {
    fn name(&self) -> &str {
        "table"
    }

    fn width(&self) -> usize {
        self.width
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| Error::validation(format!("no embedding for `{text}`")))
    }
}
