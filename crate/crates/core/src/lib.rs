//! Drug-drug interaction classification from biomedical sentences.
//!
//! The pipeline parses the annotated DDI XML corpus, blinds each target drug
//! pair, encodes the sentence with a bidirectional GRU, pools the encoding
//! through a word-level attention layer, combines the feature vectors of
//! sentences sharing the drug pair through a sentence-level attention layer,
//! and classifies into one of five interaction types. Training, a macro
//! precision/recall/F1 evaluator, and a checkpoint format round things out.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod evaluation;
pub mod numerics;
pub mod sentence_attention;
pub mod training;

#[cfg(test)]
pub(crate) mod testsupport;

pub use corpus::{DdiLabel, Instance, PairKey, Vocabulary};
pub use numerics::{Graph, NodeId, Tensor};
pub use training::{Model, TrainConfig};
