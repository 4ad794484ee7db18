//! Training/validation splits by topic ratio or random holdout.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedExample;
use crate::error::{Error, Result};

pub const SPLIT_IDS: std::ops::RangeInclusive<u32> = 1..=5;
/// Fraction of examples held out by the random split.
pub const CV_VALIDATION_FRACTION: f64 = 0.07;
const REQUIRED_TOPICS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitRatio {
    #[serde(rename = "cv")]
    Cv,
    #[serde(rename = "5:1")]
    FiveOne,
    #[serde(rename = "4:2")]
    FourTwo,
    #[serde(rename = "2:4")]
    TwoFour,
}

impl SplitRatio {
    pub const ALL: [SplitRatio; 4] = [SplitRatio::Cv, SplitRatio::FiveOne, SplitRatio::FourTwo, SplitRatio::TwoFour];

    pub fn name(self) -> &'static str {
        match self {
            SplitRatio::Cv => "cv",
            SplitRatio::FiveOne => "5:1",
            SplitRatio::FourTwo => "4:2",
            SplitRatio::TwoFour => "2:4",
        }
    }

    /// Number of validation topics, `None` for the random split.
    pub fn validation_topics(self) -> Option<usize> {
        match self {
            SplitRatio::Cv => None,
            SplitRatio::FiveOne => Some(1),
            SplitRatio::FourTwo => Some(2),
            SplitRatio::TwoFour => Some(4),
        }
    }
}

impl fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SplitRatio::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split ratio `{s}` (expected cv, 5:1, 4:2 or 2:4)")))
    }
}

/// A deterministic split, recorded by example id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub split_id: u32,
    pub ratio: SplitRatio,
    pub train_topics: Vec<String>,
    pub validation_topics: Vec<String>,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

impl Split {
    /// Materializes the split over `examples`, preserving corpus order.
    pub fn partition(&self, examples: &[AnnotatedExample]) -> (Vec<AnnotatedExample>, Vec<AnnotatedExample>) {
        let val: HashSet<&str> = self.validation.iter().map(String::as_str).collect();
        examples.iter().cloned().partition(|e| !val.contains(e.id.as_str()))
    }
}

pub fn topic_split(examples: &[AnnotatedExample], ratio: SplitRatio, split_id: u32) -> Result<Split> {
    if !SPLIT_IDS.contains(&split_id) {
        return Err(Error::Config(format!("split id {split_id} outside 1..=5")));
    }
    let mut seen = HashSet::new();
    for e in examples {
        if !seen.insert(e.id.as_str()) {
            return Err(Error::validation(format!("duplicate example id `{}`", e.id)));
        }
    }
    let topics: BTreeSet<&str> = examples.iter().map(|e| e.topic.as_str()).collect();
    let seed = u64::from(split_id) * 16 + ratio as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match ratio.validation_topics() {
        None => {
            if examples.len() < 2 {
                return Err(Error::validation("random split needs at least two examples"));
            }
            let n_val = ((examples.len() as f64 * CV_VALIDATION_FRACTION).round() as usize).max(1);
            let mut order: Vec<usize> = (0..examples.len()).collect();
            order.shuffle(&mut rng);
            let val: HashSet<usize> = order[..n_val].iter().copied().collect();
            let (mut train, mut validation) = (Vec::new(), Vec::new());
            for (i, e) in examples.iter().enumerate() {
                if val.contains(&i) {
                    validation.push(e.id.clone());
                } else {
                    train.push(e.id.clone());
                }
            }
            let all: Vec<String> = topics.iter().map(|t| t.to_string()).collect();
            Ok(Split {
                split_id,
                ratio,
                train_topics: all.clone(),
                validation_topics: all,
                train,
                validation,
            })
        }
        Some(k) => {
            if topics.len() < REQUIRED_TOPICS {
                return Err(Error::validation(format!(
                    "topic split {ratio} needs {REQUIRED_TOPICS} topics, corpus has {}",
                    topics.len()
                )));
            }
            let mut shuffled: Vec<&str> = topics.into_iter().collect();
            shuffled.shuffle(&mut rng);
            let mut validation_topics: Vec<String> = shuffled[..k].iter().map(|t| t.to_string()).collect();
            let mut train_topics: Vec<String> = shuffled[k..].iter().map(|t| t.to_string()).collect();
            validation_topics.sort();
            train_topics.sort();
            let (mut train, mut validation) = (Vec::new(), Vec::new());
            for e in examples {
                if validation_topics.contains(&e.topic) {
                    validation.push(e.id.clone());
                } else {
                    train.push(e.id.clone());
                }
            }
            Ok(Split {
                split_id,
                ratio,
                train_topics,
                validation_topics,
                train,
                validation,
            })
        }
    }
}
