//! Controllable factual-argument pipeline: span grounding to a fact
//! knowledge base, joint span and argument-scheme tagging, weakly supervised
//! corpus expansion, and control-coded encoder-decoder generation.

pub mod corpus;
mod error;
pub mod eval;
pub mod fixture;
pub mod generator;
pub mod grounder;
pub mod normalize;
pub mod pipeline;
pub mod nn;
pub mod tagger;
pub mod vocab;

pub use corpus::{
    AnnotatedExample, ArgumentScheme, FactVariable, Grounding, KnowledgeBase, Span, SpanLabeling, Stance,
};
pub use error::{Error, Result};
