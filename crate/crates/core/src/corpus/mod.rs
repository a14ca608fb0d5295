//! Corpus ingestion: annotated-XML parsing, drug blinding, tokenization,
//! vocabulary construction, and pair grouping.

mod blind;
mod parse;
mod vocab;

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use blind::{blind_instances, tokenize, BlindedInstance};
pub use parse::parse_corpus;
pub use vocab::{
    dump_instances, encode_instance, group_by_pair, Vocabulary, DRUG0, DRUG1, DRUG2, PAD, UNK,
};

/// The five interaction types, in their stable encoding order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DdiLabel {
    False = 0,
    Mechanism = 1,
    Effect = 2,
    Advise = 3,
    Int = 4,
}

impl DdiLabel {
    pub const ALL: [DdiLabel; 5] = [
        DdiLabel::False,
        DdiLabel::Mechanism,
        DdiLabel::Effect,
        DdiLabel::Advise,
        DdiLabel::Int,
    ];

    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<DdiLabel> {
        DdiLabel::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DdiLabel::False => "False",
            DdiLabel::Mechanism => "Mechanism",
            DdiLabel::Effect => "Effect",
            DdiLabel::Advise => "Advise",
            DdiLabel::Int => "Int",
        }
    }

    /// Parses both the display form ("Mechanism") and the corpus attribute
    /// form ("mechanism").
    pub fn parse(s: &str) -> Option<DdiLabel> {
        match s.to_ascii_lowercase().as_str() {
            "false" => Some(DdiLabel::False),
            "mechanism" => Some(DdiLabel::Mechanism),
            "effect" => Some(DdiLabel::Effect),
            "advise" => Some(DdiLabel::Advise),
            "int" => Some(DdiLabel::Int),
            _ => None,
        }
    }
}

impl std::fmt::Display for DdiLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Annotated drug mention. `char_end` is inclusive, both offsets count
/// Unicode scalars.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub surface: String,
    pub drug_type: String,
}

/// Annotated drug pair with its gold interaction label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldPair {
    pub id: String,
    pub e1: String,
    pub e2: String,
    pub label: DdiLabel,
}

/// One corpus sentence with its entity and pair annotations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSentence {
    pub doc_id: String,
    pub sent_id: String,
    pub text: String,
    pub entities: Vec<Entity>,
    pub pairs: Vec<GoldPair>,
}

/// Normalized identity of a drug pair in blinded role order (the drug1
/// name first). Names are case-folded with interior whitespace collapsed;
/// the order is preserved, not sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairKey {
    pub name1: String,
    pub name2: String,
}

impl PairKey {
    pub fn new(name1: &str, name2: &str) -> Self {
        PairKey {
            name1: normalize_name(name1),
            name2: normalize_name(name2),
        }
    }
}

impl std::fmt::Display for PairKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.name1, self.name2)
    }
}

fn normalize_name(name: &str) -> String {
    name.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Where an instance came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceSource {
    pub doc_id: String,
    pub sent_id: String,
    pub pair_id: String,
}

impl std::fmt::Display for InstanceSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.doc_id, self.sent_id, self.pair_id)
    }
}

/// Encoded, blinded sentence-pair instance ready for the model. Tokens are
/// vocabulary indices of length at most `t_max`; padding happens at the
/// embedding stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub tokens: Vec<usize>,
    /// Token position of the reserved drug1 token.
    pub drug1_pos: usize,
    /// Token position of the reserved drug2 token.
    pub drug2_pos: usize,
    pub pair_key: PairKey,
    pub label: DdiLabel,
    pub source: InstanceSource,
}

/// Grouping of instances by their drug pair.
pub type PairGroups = BTreeMap<PairKey, Vec<usize>>;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("xml syntax error in {file} at {position}")]
    XmlSyntax { file: PathBuf, position: String },
    #[error("schema error in {file}: {detail}")]
    Schema { file: PathBuf, detail: String },
    #[error("empty corpus: no instances to build a vocabulary from")]
    EmptyCorpus,
    #[error("bad vocabulary data: {0}")]
    BadVocabulary(String),
    #[error("entity spans overlap in {sent_id}: {ids:?}")]
    OverlappingEntities { sent_id: String, ids: Vec<String> },
    #[error("blinding failed for pair {pair_id}: {detail}")]
    BlindingAmbiguous { pair_id: String, detail: String },
    #[error("drug token truncated out of {instance}")]
    DrugTruncated { instance: InstanceSource },
}

/// A pair that could not be blinded or encoded, with the reason.
#[derive(Debug)]
pub struct SkippedPair {
    pub source: InstanceSource,
    pub reason: CorpusError,
}
