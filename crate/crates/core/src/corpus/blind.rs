//! Drug blinding and tokenization.
//!
//! For each gold pair the two target mentions are spliced out of the
//! sentence and replaced by the reserved tokens `drug1`/`drug2` (the pair's
//! e1 and e2 respectively), every other drug mention by `drug0`. Splicing
//! happens on character spans before tokenization so a multi-word mention
//! collapses to a single blinded token and the two drug positions are
//! single token indices.

use super::{CorpusError, DdiLabel, InstanceSource, PairKey, RawSentence, SkippedPair};

/// Punctuation detached into standalone tokens.
const DETACHED: [char; 7] = ['.', ',', ';', ':', '(', ')', '/'];

/// Case-fold, split on whitespace, and detach `. , ; : ( ) /` into
/// separate tokens. The blinded tokens `drug0`/`drug1`/`drug2` contain no
/// detached characters and survive intact.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if DETACHED.contains(&ch) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// One blinded sentence-pair instance before vocabulary encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct BlindedInstance {
    pub tokens: Vec<String>,
    pub drug1_pos: usize,
    pub drug2_pos: usize,
    pub pair_key: PairKey,
    pub label: DdiLabel,
    pub source: InstanceSource,
}

/// Blind one instance per gold pair. Pairs whose sentence has intersecting
/// entity spans (or whose placeholders cannot be located unambiguously)
/// are skipped with a diagnostic instead of guessing a splice order.
pub fn blind_instances(sentence: &RawSentence) -> (Vec<BlindedInstance>, Vec<SkippedPair>) {
    let mut instances = Vec::new();
    let mut skipped = Vec::new();

    let overlap = overlapping_ids(sentence);
    let chars: Vec<char> = sentence.text.chars().collect();

    for pair in &sentence.pairs {
        let source = InstanceSource {
            doc_id: sentence.doc_id.clone(),
            sent_id: sentence.sent_id.clone(),
            pair_id: pair.id.clone(),
        };
        if !overlap.is_empty() {
            skipped.push(SkippedPair {
                source,
                reason: CorpusError::OverlappingEntities {
                    sent_id: sentence.sent_id.clone(),
                    ids: overlap.clone(),
                },
            });
            continue;
        }

        // splice right-to-left so earlier spans keep their offsets
        let mut by_start: Vec<&super::Entity> = sentence.entities.iter().collect();
        by_start.sort_by_key(|e| std::cmp::Reverse(e.char_start));
        let mut spliced = chars.clone();
        for entity in by_start {
            let placeholder = if entity.id == pair.e1 {
                " drug1 "
            } else if entity.id == pair.e2 {
                " drug2 "
            } else {
                " drug0 "
            };
            spliced.splice(entity.char_start..=entity.char_end, placeholder.chars());
        }
        let blinded_text: String = spliced.into_iter().collect();
        let tokens = tokenize(&blinded_text);

        match (
            single_position(&tokens, "drug1"),
            single_position(&tokens, "drug2"),
        ) {
            (Some(drug1_pos), Some(drug2_pos)) => {
                let name1 = &entity_surface(sentence, &pair.e1);
                let name2 = &entity_surface(sentence, &pair.e2);
                instances.push(BlindedInstance {
                    tokens,
                    drug1_pos,
                    drug2_pos,
                    pair_key: PairKey::new(name1, name2),
                    label: pair.label,
                    source,
                });
            }
            _ => {
                skipped.push(SkippedPair {
                    source,
                    reason: CorpusError::BlindingAmbiguous {
                        pair_id: pair.id.clone(),
                        detail: "expected exactly one drug1 and one drug2 token".to_string(),
                    },
                });
            }
        }
    }
    (instances, skipped)
}

fn entity_surface(sentence: &RawSentence, entity_id: &str) -> String {
    sentence
        .entities
        .iter()
        .find(|e| e.id == entity_id)
        .map(|e| e.surface.clone())
        .unwrap_or_default()
}

fn single_position(tokens: &[String], token: &str) -> Option<usize> {
    let mut found = None;
    for (i, t) in tokens.iter().enumerate() {
        if t == token {
            if found.is_some() {
                return None;
            }
            found = Some(i);
        }
    }
    found
}

/// Ids of entities whose character spans intersect any other entity's span.
fn overlapping_ids(sentence: &RawSentence) -> Vec<String> {
    let mut sorted: Vec<&super::Entity> = sentence.entities.iter().collect();
    sorted.sort_by_key(|e| e.char_start);
    let mut ids = Vec::new();
    for pair in sorted.windows(2) {
        if pair[1].char_start <= pair[0].char_end {
            ids.push(pair[0].id.clone());
            ids.push(pair[1].id.clone());
        }
    }
    ids.dedup();
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Entity, GoldPair};

    fn entity(id: &str, start: usize, end: usize, surface: &str) -> Entity {
        Entity {
            id: id.to_string(),
            char_start: start,
            char_end: end,
            surface: surface.to_string(),
            drug_type: "drug".to_string(),
        }
    }

    fn pair(id: &str, e1: &str, e2: &str, label: DdiLabel) -> GoldPair {
        GoldPair {
            id: id.to_string(),
            e1: e1.to_string(),
            e2: e2.to_string(),
            label,
        }
    }

    fn hepatitis_sentence() -> RawSentence {
        let text = "Methotrexate: An increased risk of hepatitis has been reported to result \
                    from combined use of methotrexate and etretinate.";
        RawSentence {
            doc_id: "d1".to_string(),
            sent_id: "d1.s0".to_string(),
            text: text.to_string(),
            entities: vec![
                entity("e0", 0, 11, "Methotrexate"),
                entity("e1", 94, 105, "methotrexate"),
                entity("e2", 111, 120, "etretinate"),
            ],
            pairs: vec![
                pair("p0", "e0", "e1", DdiLabel::False),
                pair("p1", "e0", "e2", DdiLabel::False),
                pair("p2", "e1", "e2", DdiLabel::Effect),
            ],
        }
    }

    #[test]
    fn tokenize_detaches_punctuation() {
        assert_eq!(
            tokenize("Clinical implications of warfarin."),
            vec!["clinical", "implications", "of", "warfarin", "."]
        );
    }

    #[test]
    fn tokenize_empty_is_empty() {
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn tokenize_keeps_blinded_tokens_intact() {
        assert_eq!(
            tokenize("drug1: combined use"),
            vec!["drug1", ":", "combined", "use"]
        );
    }

    #[test]
    fn three_entities_yield_three_instances() {
        let (instances, skipped) = blind_instances(&hepatitis_sentence());
        assert!(skipped.is_empty());
        assert_eq!(instances.len(), 3);

        // the (e1, e2) pair reads as the blinded sentence with the leading
        // mention as drug0
        let third = &instances[2];
        let expected: Vec<String> = [
            "drug0",
            ":",
            "an",
            "increased",
            "risk",
            "of",
            "hepatitis",
            "has",
            "been",
            "reported",
            "to",
            "result",
            "from",
            "combined",
            "use",
            "of",
            "drug1",
            "and",
            "drug2",
            ".",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(third.tokens, expected);
        assert_eq!(third.tokens[third.drug1_pos], "drug1");
        assert_eq!(third.tokens[third.drug2_pos], "drug2");
        assert_eq!(third.pair_key, PairKey::new("methotrexate", "etretinate"));
        assert_eq!(third.label, DdiLabel::Effect);

        // role assignment follows the pair, so the first instance blinds the
        // leading mention as drug1
        assert_eq!(instances[0].tokens[instances[0].drug1_pos], "drug1");
        assert_eq!(instances[0].tokens[0], "drug1");
    }

    #[test]
    fn sentence_without_pairs_yields_nothing() {
        let sentence = RawSentence {
            doc_id: "d".to_string(),
            sent_id: "s".to_string(),
            text: "Aspirin is a drug.".to_string(),
            entities: vec![entity("e0", 0, 6, "Aspirin")],
            pairs: vec![],
        };
        let (instances, skipped) = blind_instances(&sentence);
        assert!(instances.is_empty());
        assert!(skipped.is_empty());
    }

    #[test]
    fn two_entity_pair_has_no_drug0() {
        let sentence = RawSentence {
            doc_id: "d".to_string(),
            sent_id: "s".to_string(),
            text: "Iron inhibits cobalt.".to_string(),
            entities: vec![entity("e0", 0, 3, "Iron"), entity("e1", 14, 19, "cobalt")],
            pairs: vec![pair("p0", "e0", "e1", DdiLabel::Mechanism)],
        };
        let (instances, _) = blind_instances(&sentence);
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].tokens, vec!["drug1", "inhibits", "drug2", "."]);
        assert!(!instances[0].tokens.iter().any(|t| t == "drug0"));
    }

    #[test]
    fn multi_word_mention_collapses_to_one_token() {
        let text = "Concomitantly given thiazide diuretics did not interfere with digoxin.";
        let sentence = RawSentence {
            doc_id: "d".to_string(),
            sent_id: "s".to_string(),
            text: text.to_string(),
            entities: vec![
                entity("e0", 20, 37, "thiazide diuretics"),
                entity("e1", 62, 68, "digoxin"),
            ],
            pairs: vec![pair("p0", "e0", "e1", DdiLabel::False)],
        };
        let (instances, skipped) = blind_instances(&sentence);
        assert!(skipped.is_empty(), "{:?}", skipped);
        assert_eq!(
            instances[0].tokens,
            vec![
                "concomitantly",
                "given",
                "drug1",
                "did",
                "not",
                "interfere",
                "with",
                "drug2",
                "."
            ]
        );
        assert_eq!(
            instances[0].pair_key,
            PairKey::new("thiazide diuretics", "digoxin")
        );
    }

    #[test]
    fn overlapping_entities_skip_with_diagnostic() {
        let sentence = RawSentence {
            doc_id: "d".to_string(),
            sent_id: "s".to_string(),
            text: "alpha beta gamma".to_string(),
            entities: vec![entity("e0", 0, 7, "alpha be"), entity("e1", 6, 9, "beta")],
            pairs: vec![pair("p0", "e0", "e1", DdiLabel::False)],
        };
        let (instances, skipped) = blind_instances(&sentence);
        assert!(instances.is_empty());
        assert_eq!(skipped.len(), 1);
        assert!(matches!(
            skipped[0].reason,
            CorpusError::OverlappingEntities { .. }
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        /// Exhaustive gold pairs over n entities blind into exactly
        /// n*(n-1)/2 instances (explicit double-loop count), each with one
        /// drug1 and one drug2 token.
        #[test]
        fn exhaustive_pairs_blind_to_n_choose_2(
            n in 2usize..=6,
            fillers in proptest::collection::vec(0usize..8, 2..20),
        ) {
            let lexicon = ["the", "combined", "dose", "was", "reported", "during", "therapy", "of"];
            let mut text = String::new();
            let mut entities = Vec::new();
            for i in 0..n {
                text.push_str(lexicon[fillers[i % fillers.len()]]);
                text.push(' ');
                let name = format!("compound{}", i);
                let start = text.chars().count();
                text.push_str(&name);
                let end = text.chars().count() - 1;
                text.push(' ');
                entities.push(Entity {
                    id: format!("e{}", i),
                    char_start: start,
                    char_end: end,
                    surface: name,
                    drug_type: "drug".to_string(),
                });
            }
            text.push('.');
            let mut pairs = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    pairs.push(GoldPair {
                        id: format!("p{}_{}", i, j),
                        e1: format!("e{}", i),
                        e2: format!("e{}", j),
                        label: DdiLabel::from_index((i + j) % 5).unwrap(),
                    });
                }
            }
            let sentence = RawSentence {
                doc_id: "d".to_string(),
                sent_id: "s".to_string(),
                text,
                entities,
                pairs,
            };

            let mut expected = 0usize;
            for i in 0..n {
                for j in 0..n {
                    if i < j {
                        expected += 1;
                    }
                }
            }
            let (instances, skipped) = blind_instances(&sentence);
            proptest::prop_assert!(skipped.is_empty());
            proptest::prop_assert_eq!(instances.len(), expected);
            for inst in &instances {
                let d1 = inst.tokens.iter().filter(|t| *t == "drug1").count();
                let d2 = inst.tokens.iter().filter(|t| *t == "drug2").count();
                proptest::prop_assert_eq!((d1, d2), (1, 1));
            }
        }
    }

    #[test]
    fn mention_fused_to_other_text_still_blinds_cleanly() {
        // splicing pads with spaces, so a mention glued to a hyphenated
        // suffix still becomes its own token
        let sentence = RawSentence {
            doc_id: "d".to_string(),
            sent_id: "s".to_string(),
            text: "warfarin-like agents affect heparin".to_string(),
            entities: vec![
                entity("e0", 0, 7, "warfarin"),
                entity("e1", 28, 34, "heparin"),
            ],
            pairs: vec![pair("p0", "e0", "e1", DdiLabel::False)],
        };
        let (instances, skipped) = blind_instances(&sentence);
        assert!(skipped.is_empty());
        assert_eq!(
            instances[0].tokens,
            vec!["drug1", "-like", "agents", "affect", "drug2"]
        );
    }
}
