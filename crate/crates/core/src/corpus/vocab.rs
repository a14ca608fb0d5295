//! Vocabulary, instance encoding, and pair grouping.

use std::collections::HashMap;
use std::io::{self, Write};

use super::{BlindedInstance, CorpusError, Instance, PairGroups};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const DRUG0: usize = 2;
pub const DRUG1: usize = 3;
pub const DRUG2: usize = 4;

const RESERVED: [&str; 5] = ["<pad>", "<unk>", "drug0", "drug1", "drug2"];

/// Bijective token/index map with five reserved entries. Indices are
/// assigned by first occurrence in the training corpus, which keeps
/// construction deterministic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Build from training instances; tokens seen fewer than `min_count`
    /// times map to `<unk>` at encoding time.
    pub fn build(instances: &[BlindedInstance], min_count: usize) -> Result<Self, CorpusError> {
        if instances.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for inst in instances {
            for token in &inst.tokens {
                *counts.entry(token.as_str()).or_insert(0) += 1;
            }
        }
        let mut vocab = Vocabulary::reserved_only();
        for inst in instances {
            for token in &inst.tokens {
                if vocab.index.contains_key(token.as_str()) {
                    continue;
                }
                if counts[token.as_str()] >= min_count {
                    vocab.index.insert(token.clone(), vocab.tokens.len());
                    vocab.tokens.push(token.clone());
                }
            }
        }
        Ok(vocab)
    }

    pub fn reserved_only() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { index, tokens }
    }

    /// Rebuild from an index-ordered token list (checkpoint loading).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CorpusError> {
        for (i, reserved) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*reserved) {
                return Err(CorpusError::BadVocabulary(format!(
                    "index {} must be the reserved token {}",
                    i, reserved
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for token in &tokens {
            if !seen.insert(token.as_str()) {
                return Err(CorpusError::BadVocabulary(format!(
                    "duplicate token '{}'",
                    token
                )));
            }
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { index, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index for a token, falling back to `<unk>`.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Stable hash of the token list, used to spot checkpoint/corpus
    /// mismatches.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        for token in &self.tokens {
            token.hash(&mut hasher);
        }
        hasher.finish()
    }
}

/// Map a blinded instance into vocabulary indices. Sequences longer than
/// `t_max` are tail-truncated; if truncation would drop either drug
/// position the instance is rejected.
pub fn encode_instance(
    blinded: &BlindedInstance,
    vocab: &Vocabulary,
    t_max: usize,
) -> Result<Instance, CorpusError> {
    if blinded.drug1_pos >= t_max || blinded.drug2_pos >= t_max {
        return Err(CorpusError::DrugTruncated {
            instance: blinded.source.clone(),
        });
    }
    let tokens: Vec<usize> = blinded
        .tokens
        .iter()
        .take(t_max)
        .map(|t| vocab.lookup(t))
        .collect();
    debug_assert_eq!(tokens[blinded.drug1_pos], DRUG1);
    debug_assert_eq!(tokens[blinded.drug2_pos], DRUG2);
    Ok(Instance {
        tokens,
        drug1_pos: blinded.drug1_pos,
        drug2_pos: blinded.drug2_pos,
        pair_key: blinded.pair_key.clone(),
        label: blinded.label,
        source: blinded.source.clone(),
    })
}

/// Group instance indices by their pair key; every instance lands in
/// exactly one group.
pub fn group_by_pair(instances: &[Instance]) -> PairGroups {
    let mut groups = PairGroups::new();
    for (i, inst) in instances.iter().enumerate() {
        groups.entry(inst.pair_key.clone()).or_default().push(i);
    }
    groups
}

/// Newline-delimited debug dump:
/// `doc_id\tsent_id\tpair_id\tlabel\tu\tv\tspace-joined tokens`.
pub fn dump_instances<W: Write>(w: &mut W, instances: &[BlindedInstance]) -> io::Result<()> {
    for inst in instances {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            inst.source.doc_id,
            inst.source.sent_id,
            inst.source.pair_id,
            inst.label,
            inst.drug1_pos,
            inst.drug2_pos,
            inst.tokens.join(" ")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DdiLabel, InstanceSource, PairKey};

    fn blinded(tokens: &[&str], u: usize, v: usize) -> BlindedInstance {
        BlindedInstance {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            drug1_pos: u,
            drug2_pos: v,
            pair_key: PairKey::new("iron", "cobalt"),
            label: DdiLabel::Mechanism,
            source: InstanceSource {
                doc_id: "d".to_string(),
                sent_id: "s".to_string(),
                pair_id: "p".to_string(),
            },
        }
    }

    #[test]
    fn single_instance_vocabulary_counts() {
        let inst = blinded(&["drug1", "inhibits", "drug2"], 0, 2);
        let vocab = Vocabulary::build(std::slice::from_ref(&inst), 1).unwrap();
        assert_eq!(vocab.len(), 6); // five reserved plus "inhibits"
        assert_eq!(vocab.lookup("<pad>"), PAD);
        assert_eq!(vocab.lookup("drug1"), DRUG1);
        assert_eq!(vocab.lookup("inhibits"), 5);
    }

    #[test]
    fn min_count_sends_rare_tokens_to_unk() {
        let a = blinded(&["drug1", "inhibits", "drug2"], 0, 2);
        let b = blinded(&["drug1", "inhibits", "drug2", "rarely"], 0, 2);
        let vocab = Vocabulary::build(&[a, b.clone()], 2).unwrap();
        assert!(!vocab.contains("rarely"));
        let encoded = encode_instance(&b, &vocab, 10).unwrap();
        assert_eq!(encoded.tokens[3], UNK);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            Vocabulary::build(&[], 1),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn pad_is_always_index_zero() {
        let vocab = Vocabulary::reserved_only();
        assert_eq!(vocab.lookup("<pad>"), 0);
        assert_eq!(vocab.token(0), Some("<pad>"));
    }

    #[test]
    fn encoding_keeps_short_sequences_unpadded() {
        let inst = blinded(&["drug1", "inhibits", "drug2"], 0, 2);
        let vocab = Vocabulary::build(std::slice::from_ref(&inst), 1).unwrap();
        let encoded = encode_instance(&inst, &vocab, 5).unwrap();
        // padding to t_max happens at the matrix stage, not here
        assert_eq!(encoded.tokens.len(), 3);
    }

    #[test]
    fn truncation_past_a_drug_position_rejects() {
        let mut tokens: Vec<String> = (0..120).map(|i| format!("w{}", i)).collect();
        tokens[4] = "drug1".to_string();
        tokens[115] = "drug2".to_string();
        let inst = BlindedInstance {
            tokens,
            drug1_pos: 4,
            drug2_pos: 115,
            pair_key: PairKey::new("a", "b"),
            label: DdiLabel::False,
            source: InstanceSource {
                doc_id: "d".to_string(),
                sent_id: "s".to_string(),
                pair_id: "p".to_string(),
            },
        };
        let vocab = Vocabulary::reserved_only();
        assert!(matches!(
            encode_instance(&inst, &vocab, 100),
            Err(CorpusError::DrugTruncated { .. })
        ));
    }

    #[test]
    fn unknown_word_maps_to_unk() {
        let inst = blinded(&["drug1", "inhibits", "drug2"], 0, 2);
        let vocab = Vocabulary::build(std::slice::from_ref(&inst), 1).unwrap();
        let other = blinded(&["drug1", "xyzzy", "drug2"], 0, 2);
        let encoded = encode_instance(&other, &vocab, 5).unwrap();
        assert_eq!(encoded.tokens[1], UNK);
    }

    #[test]
    fn decoding_round_trips_without_unk() {
        let inst = blinded(&["drug0", ":", "drug1", "affects", "drug2"], 2, 4);
        let vocab = Vocabulary::build(std::slice::from_ref(&inst), 1).unwrap();
        let encoded = encode_instance(&inst, &vocab, 10).unwrap();
        let decoded: Vec<&str> = encoded
            .tokens
            .iter()
            .map(|&i| vocab.token(i).unwrap())
            .collect();
        assert_eq!(decoded, inst.tokens);
    }

    #[test]
    fn grouping_is_total_and_keyed_by_pair() {
        let a = blinded(&["drug1", "x", "drug2"], 0, 2);
        let b = blinded(&["drug1", "y", "drug2"], 0, 2);
        let mut c = blinded(&["drug1", "z", "drug2"], 0, 2);
        c.pair_key = PairKey::new("warfarin", "sedatives");
        let vocab = Vocabulary::build(&[a.clone(), b.clone(), c.clone()], 1).unwrap();
        let instances: Vec<_> = [a, b, c]
            .iter()
            .map(|i| encode_instance(i, &vocab, 10).unwrap())
            .collect();
        let groups = group_by_pair(&instances);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[&PairKey::new("iron", "cobalt")].len(), 2);
        assert_eq!(groups[&PairKey::new("warfarin", "sedatives")].len(), 1);
        let total: usize = groups.values().map(Vec::len).sum();
        assert_eq!(total, instances.len());
    }

    #[test]
    fn grouping_empty_input_is_empty() {
        assert!(group_by_pair(&[]).is_empty());
    }

    #[test]
    fn dump_format_is_tab_separated() {
        let inst = blinded(&["drug1", "inhibits", "drug2"], 0, 2);
        let mut out = Vec::new();
        dump_instances(&mut out, &[inst]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "d\ts\tp\tMechanism\t0\t2\tdrug1 inhibits drug2\n"
        );
    }
}
