//! Sentence-level attention: blend the feature vectors of instances that
//! share a drug pair into one representation, then classify.
//!
//! The store keeps previously seen feature vectors per pair as plain
//! values. During attention they enter the graph as constants, so gradient
//! flows only into the current instance's feature vector and the attention
//! parameters.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;

use crate::corpus::{DdiLabel, PairKey};
use crate::numerics::{Graph, NodeId, Tensor};

/// Attention parameters: the diagonal of the scaling matrix and the learned
/// query vector representing an interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceAttentionParams {
    pub feature_scale: Tensor,
    pub relation_query: Tensor,
}

impl SentenceAttentionParams {
    pub fn init<R: Rng>(d_h: usize, rng: &mut R) -> Self {
        SentenceAttentionParams {
            feature_scale: Tensor::uniform(&[d_h], -0.1, 0.1, rng),
            relation_query: Tensor::uniform(&[d_h], -0.1, 0.1, rng),
        }
    }
}

/// Softmax classifier weights over the five interaction types.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ClassifierParams {
    pub fn init<R: Rng>(d_h: usize, rng: &mut R) -> Self {
        ClassifierParams {
            weight: Tensor::uniform(&[DdiLabel::COUNT, d_h], -0.1, 0.1, rng),
            bias: Tensor::uniform(&[DdiLabel::COUNT], -0.1, 0.1, rng),
        }
    }
}

/// Per-pair ring buffers of stored feature vectors, oldest first. Values
/// carry no gradient history; capacity is enforced with FIFO eviction.
#[derive(Clone, Debug, PartialEq)]
pub struct RelevantStore {
    capacity: usize,
    groups: BTreeMap<PairKey, VecDeque<Vec<f64>>>,
}

impl RelevantStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "store capacity must be at least 1");
        RelevantStore {
            capacity,
            groups: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append a value copy for the key, evicting the oldest past capacity.
    pub fn insert(&mut self, key: PairKey, feature: Vec<f64>) {
        let buffer = self.groups.entry(key).or_default();
        if buffer.len() == self.capacity {
            buffer.pop_front();
        }
        buffer.push_back(feature);
    }

    pub fn get(&self, key: &PairKey) -> Option<&VecDeque<Vec<f64>>> {
        self.groups.get(key)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Keys with their buffers, in key order (deterministic).
    pub fn iter(&self) -> impl Iterator<Item = (&PairKey, &VecDeque<Vec<f64>>)> {
        self.groups.iter()
    }
}

/// Combine the stored feature vectors for `key` (as constants) with the
/// gradient-carrying `current` vector. Scores come from the bilinear form
/// between each member and the scaled relation query; the result is the
/// softmax-weighted sum of the members. Returns the blended representation
/// and the weights, ordered stored-oldest-first with the current instance
/// last.
pub fn attend_sentences(
    g: &mut Graph,
    current: NodeId,
    key: &PairKey,
    store: &RelevantStore,
    feature_scale: NodeId,
    relation_query: NodeId,
) -> (NodeId, NodeId) {
    let mut members: Vec<NodeId> = store
        .get(key)
        .map(|buffer| {
            buffer
                .iter()
                .map(|v| g.constant(Tensor::vector(v.clone())))
                .collect()
        })
        .unwrap_or_default();
    members.push(current);

    let scaled_query = g.mul(feature_scale, relation_query);
    let scores: Vec<NodeId> = members.iter().map(|&m| g.dot(m, scaled_query)).collect();
    let stacked = g.concat(&scores);
    let weights = g.softmax(stacked);
    let columns = g.concat_cols(&members);
    let blended = g.matmul(columns, weights);
    (blended, weights)
}

/// Class probabilities for a blended representation.
pub fn classify(g: &mut Graph, s: NodeId, weight: NodeId, bias: NodeId) -> NodeId {
    let logits = g.matmul(weight, s);
    let shifted = g.add(logits, bias);
    g.softmax(shifted)
}
