use serde::{Deserialize, Serialize};

use super::{Grounding, Span, SpanLabeling};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    O,
}

impl BioTag {
    pub const ALL: [BioTag; 3] = [BioTag::B, BioTag::I, BioTag::O];

    /// Class index used by the taggers' logits.
    pub fn index(self) -> usize {
        match self {
            BioTag::B => 0,
            BioTag::I => 1,
            BioTag::O => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

/// Which spans an encoding covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Channel {
    /// Every span regardless of grounding.
    All,
    /// Only spans grounded to this id.
    Grounding(Grounding),
}

pub fn encode_bio(
    labeling: &SpanLabeling,
    token_count: usize,
    channel: &Channel,
) -> Result<Vec<BioTag>> {
    labeling.validate(token_count)?;
    let mut tags = vec![BioTag::O; token_count];
    for span in &labeling.spans {
        if let Channel::Grounding(g) = channel {
            if &span.grounding != g {
                continue;
            }
        }
        tags[span.start] = BioTag::B;
        for t in &mut tags[span.start + 1..span.end] {
            *t = BioTag::I;
        }
    }
    Ok(tags)
}

/// Lenient decode: an `I` with nothing open starts a new span.
pub fn decode_bio(tags: &[BioTag], grounding: &Grounding) -> SpanLabeling {
    decode(tags, grounding, false).expect("lenient decoding is total")
}

/// Strict decode for gold data: an orphan `I` is an error.
pub fn decode_bio_strict(tags: &[BioTag], grounding: &Grounding) -> Result<SpanLabeling> {
    decode(tags, grounding, true)
}

fn decode(tags: &[BioTag], grounding: &Grounding, strict: bool) -> Result<SpanLabeling> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (p, tag) in tags.iter().enumerate() {
        match tag {
            BioTag::B => {
                if let Some(s) = open.replace(p) {
                    spans.push(Span::new(s, p, grounding.clone()));
                }
            }
            BioTag::I => {
                if open.is_none() {
                    if strict {
                        return Err(Error::validation(format!(
                            "tag I at position {p} does not continue a span"
                        )));
                    }
                    open = Some(p);
                }
            }
            BioTag::O => {
                if let Some(s) = open.take() {
                    spans.push(Span::new(s, p, grounding.clone()));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push(Span::new(s, tags.len(), grounding.clone()));
    }
    Ok(SpanLabeling { spans })
}
