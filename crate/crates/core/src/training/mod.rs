//! Mini-batch training: the objective (mean cross entropy plus L2 over the
//! trainable parameters), optimizer stepping, the growing relevant-sentence
//! store, ablation modes, checkpointing hooks, and prediction.

pub mod checkpoint;

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    blind_instances, encode_instance, CorpusError, DdiLabel, Instance, InstanceSource, RawSentence,
    Vocabulary,
};
use crate::encoder::{
    self, bind_gru, EmbeddingTables, EncoderError, GruNodes, GruParams, WordAttentionParams,
};
use crate::evaluation;
use crate::numerics::{AdamConfig, AdamState, Graph, NodeId, Tensor};
use crate::sentence_attention::{
    attend_sentences, classify, ClassifierParams, RelevantStore, SentenceAttentionParams,
};

pub use checkpoint::CheckpointError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Hyperparameters and mode flags. The defaults are the published
/// configuration; the regularization weight, maximum steps, and trace
/// cadence are artifact knobs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub d_we: usize,
    pub d_pe: usize,
    pub d_h: usize,
    pub t_max: usize,
    pub dropout_p: f64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub adam: AdamConfig,
    pub max_steps: usize,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
    pub min_count: usize,
    pub store_capacity: usize,
    /// Fraction of training documents held out (by document-id hash) for
    /// the trace when no explicit trace corpus is given.
    pub heldout_fraction: f64,
    /// Train the embedding tables along with everything else; when false
    /// they stay at their initialization.
    pub dynamic_embeddings: bool,
    /// Blend feature vectors of same-pair sentences; when false prediction
    /// classifies the word-attention vector directly.
    pub sentence_attention: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d_we: 100,
            d_pe: 10,
            d_h: 230,
            t_max: 100,
            dropout_p: 0.5,
            batch_size: 60,
            l2_lambda: 1e-4,
            adam: AdamConfig::default(),
            max_steps: 1000,
            eval_every: 100,
            checkpoint_every: 100,
            seed: 42,
            min_count: 1,
            store_capacity: 32,
            heldout_fraction: 0.1,
            dynamic_embeddings: true,
            sentence_attention: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("d_we", self.d_we),
            ("d_pe", self.d_pe),
            ("d_h", self.d_h),
            ("batch_size", self.batch_size),
            ("store_capacity", self.store_capacity),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(TrainError::InvalidConfig(format!(
                    "{} must be positive",
                    name
                )));
            }
        }
        if self.t_max < 2 {
            return Err(TrainError::InvalidConfig(
                "t_max must be at least 2 to hold both drug tokens".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(TrainError::InvalidConfig(format!(
                "dropout_p must lie in [0, 1], got {}",
                self.dropout_p
            )));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err(TrainError::InvalidConfig(format!(
                "heldout_fraction must lie in [0, 1), got {}",
                self.heldout_fraction
            )));
        }
        if self.l2_lambda < 0.0 {
            return Err(TrainError::InvalidConfig(
                "l2_lambda must be nonnegative".to_string(),
            ));
        }
        Ok(())
    }

    /// The embedded token dimension.
    pub fn d(&self) -> usize {
        self.d_we + 2 * self.d_pe
    }
}

/// The full trainable parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub embeddings: EmbeddingTables,
    pub gru_fwd: GruParams,
    pub gru_bwd: GruParams,
    pub word_attention: WordAttentionParams,
    pub sentence_attention: SentenceAttentionParams,
    pub classifier: ClassifierParams,
}

/// Canonical parameter names, in checkpoint manifest order.
pub const PARAM_NAMES: [&str; 19] = [
    "embeddings.words",
    "embeddings.positions",
    "gru_fwd.reset_input",
    "gru_fwd.reset_hidden",
    "gru_fwd.candidate_input",
    "gru_fwd.candidate_hidden",
    "gru_fwd.update_input",
    "gru_fwd.update_hidden",
    "gru_bwd.reset_input",
    "gru_bwd.reset_hidden",
    "gru_bwd.candidate_input",
    "gru_bwd.candidate_hidden",
    "gru_bwd.update_input",
    "gru_bwd.update_hidden",
    "word_attention.query",
    "sentence_attention.feature_scale",
    "sentence_attention.relation_query",
    "classifier.weight",
    "classifier.bias",
];

impl ModelParams {
    pub fn init<R: Rng>(cfg: &TrainConfig, vocab_size: usize, rng: &mut R) -> Self {
        let embeddings = EmbeddingTables::init(
            vocab_size,
            cfg.d_we,
            cfg.d_pe,
            cfg.t_max,
            cfg.dynamic_embeddings,
            rng,
        );
        let d = cfg.d();
        ModelParams {
            embeddings,
            gru_fwd: GruParams::init(d, cfg.d_h, rng),
            gru_bwd: GruParams::init(d, cfg.d_h, rng),
            word_attention: WordAttentionParams::init(cfg.d_h, rng),
            sentence_attention: SentenceAttentionParams::init(cfg.d_h, rng),
            classifier: ClassifierParams::init(cfg.d_h, rng),
        }
    }

    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("embeddings.words", &self.embeddings.words),
            ("embeddings.positions", &self.embeddings.positions),
            ("gru_fwd.reset_input", &self.gru_fwd.reset_input),
            ("gru_fwd.reset_hidden", &self.gru_fwd.reset_hidden),
            ("gru_fwd.candidate_input", &self.gru_fwd.candidate_input),
            ("gru_fwd.candidate_hidden", &self.gru_fwd.candidate_hidden),
            ("gru_fwd.update_input", &self.gru_fwd.update_input),
            ("gru_fwd.update_hidden", &self.gru_fwd.update_hidden),
            ("gru_bwd.reset_input", &self.gru_bwd.reset_input),
            ("gru_bwd.reset_hidden", &self.gru_bwd.reset_hidden),
            ("gru_bwd.candidate_input", &self.gru_bwd.candidate_input),
            ("gru_bwd.candidate_hidden", &self.gru_bwd.candidate_hidden),
            ("gru_bwd.update_input", &self.gru_bwd.update_input),
            ("gru_bwd.update_hidden", &self.gru_bwd.update_hidden),
            ("word_attention.query", &self.word_attention.query),
            (
                "sentence_attention.feature_scale",
                &self.sentence_attention.feature_scale,
            ),
            (
                "sentence_attention.relation_query",
                &self.sentence_attention.relation_query,
            ),
            ("classifier.weight", &self.classifier.weight),
            ("classifier.bias", &self.classifier.bias),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("embeddings.words", &mut self.embeddings.words),
            ("embeddings.positions", &mut self.embeddings.positions),
            ("gru_fwd.reset_input", &mut self.gru_fwd.reset_input),
            ("gru_fwd.reset_hidden", &mut self.gru_fwd.reset_hidden),
            ("gru_fwd.candidate_input", &mut self.gru_fwd.candidate_input),
            (
                "gru_fwd.candidate_hidden",
                &mut self.gru_fwd.candidate_hidden,
            ),
            ("gru_fwd.update_input", &mut self.gru_fwd.update_input),
            ("gru_fwd.update_hidden", &mut self.gru_fwd.update_hidden),
            ("gru_bwd.reset_input", &mut self.gru_bwd.reset_input),
            ("gru_bwd.reset_hidden", &mut self.gru_bwd.reset_hidden),
            ("gru_bwd.candidate_input", &mut self.gru_bwd.candidate_input),
            (
                "gru_bwd.candidate_hidden",
                &mut self.gru_bwd.candidate_hidden,
            ),
            ("gru_bwd.update_input", &mut self.gru_bwd.update_input),
            ("gru_bwd.update_hidden", &mut self.gru_bwd.update_hidden),
            ("word_attention.query", &mut self.word_attention.query),
            (
                "sentence_attention.feature_scale",
                &mut self.sentence_attention.feature_scale,
            ),
            (
                "sentence_attention.relation_query",
                &mut self.sentence_attention.relation_query,
            ),
            ("classifier.weight", &mut self.classifier.weight),
            ("classifier.bias", &mut self.classifier.bias),
        ]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.named()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.named_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
    }

    /// Names of the parameters the optimizer updates; the embedding tables
    /// participate only in dynamic mode.
    pub fn trainable_names(dynamic_embeddings: bool) -> Vec<&'static str> {
        PARAM_NAMES
            .iter()
            .copied()
            .filter(|name| dynamic_embeddings || !name.starts_with("embeddings."))
            .collect()
    }

    /// Sum of squared entries over the regularized (trainable) parameters.
    pub fn l2_penalty(&self, dynamic_embeddings: bool) -> f64 {
        let names: HashSet<&str> = Self::trainable_names(dynamic_embeddings)
            .into_iter()
            .collect();
        self.named()
            .into_iter()
            .filter(|(n, _)| names.contains(n))
            .map(|(_, t)| t.data().iter().map(|&v| v * v).sum::<f64>())
            .sum()
    }
}

/// A trained (or loaded) model: parameters plus everything needed to encode
/// and classify new sentences.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
    pub store: RelevantStore,
}

/// Tape handles for one binding of the parameters.
pub struct BoundParams {
    pub words: NodeId,
    pub positions: NodeId,
    pub gru_fwd: GruNodes,
    pub gru_bwd: GruNodes,
    pub query: NodeId,
    pub feature_scale: NodeId,
    pub relation_query: NodeId,
    pub cls_weight: NodeId,
    pub cls_bias: NodeId,
    /// Name/node pairs for the parameters that receive gradients.
    pub trainable: Vec<(&'static str, NodeId)>,
}

/// Insert every parameter into the graph. With `for_training` the
/// trainable set (embeddings only in dynamic mode) requires gradients;
/// otherwise everything binds as constants.
pub fn bind(
    g: &mut Graph,
    params: &ModelParams,
    cfg: &TrainConfig,
    for_training: bool,
) -> BoundParams {
    let emb_grad = for_training && cfg.dynamic_embeddings;
    let words = g.leaf(params.embeddings.words.clone(), emb_grad);
    let positions = g.leaf(params.embeddings.positions.clone(), emb_grad);
    let gru_fwd = bind_gru(g, &params.gru_fwd, for_training);
    let gru_bwd = bind_gru(g, &params.gru_bwd, for_training);
    let query = g.leaf(params.word_attention.query.clone(), for_training);
    let feature_scale = g.leaf(
        params.sentence_attention.feature_scale.clone(),
        for_training,
    );
    let relation_query = g.leaf(
        params.sentence_attention.relation_query.clone(),
        for_training,
    );
    let cls_weight = g.leaf(params.classifier.weight.clone(), for_training);
    let cls_bias = g.leaf(params.classifier.bias.clone(), for_training);

    let mut trainable = Vec::new();
    if for_training {
        let by_name: Vec<(&'static str, NodeId)> = vec![
            ("embeddings.words", words),
            ("embeddings.positions", positions),
            ("gru_fwd.reset_input", gru_fwd.reset_input),
            ("gru_fwd.reset_hidden", gru_fwd.reset_hidden),
            ("gru_fwd.candidate_input", gru_fwd.candidate_input),
            ("gru_fwd.candidate_hidden", gru_fwd.candidate_hidden),
            ("gru_fwd.update_input", gru_fwd.update_input),
            ("gru_fwd.update_hidden", gru_fwd.update_hidden),
            ("gru_bwd.reset_input", gru_bwd.reset_input),
            ("gru_bwd.reset_hidden", gru_bwd.reset_hidden),
            ("gru_bwd.candidate_input", gru_bwd.candidate_input),
            ("gru_bwd.candidate_hidden", gru_bwd.candidate_hidden),
            ("gru_bwd.update_input", gru_bwd.update_input),
            ("gru_bwd.update_hidden", gru_bwd.update_hidden),
            ("word_attention.query", query),
            ("sentence_attention.feature_scale", feature_scale),
            ("sentence_attention.relation_query", relation_query),
            ("classifier.weight", cls_weight),
            ("classifier.bias", cls_bias),
        ];
        let wanted: HashSet<&str> = ModelParams::trainable_names(cfg.dynamic_embeddings)
            .into_iter()
            .collect();
        trainable = by_name
            .into_iter()
            .filter(|(n, _)| wanted.contains(n))
            .collect();
    }
    BoundParams {
        words,
        positions,
        gru_fwd,
        gru_bwd,
        query,
        feature_scale,
        relation_query,
        cls_weight,
        cls_bias,
        trainable,
    }
}

/// Tape handles for one instance's forward pass.
pub struct InstanceNodes {
    /// Word-attention pooled feature vector.
    pub feature: NodeId,
    /// Final representation after sentence attention (equals `feature`
    /// when sentence attention is disabled).
    pub blended: NodeId,
    /// Class probability vector.
    pub probs: NodeId,
    pub word_weights: NodeId,
    pub sentence_weights: Option<NodeId>,
}

/// Full forward pass for one instance: embed, encode bidirectionally with
/// dropout, pool with word attention, blend with sentence attention over
/// the store, classify.
pub fn forward_instance<R: Rng>(
    g: &mut Graph,
    bound: &BoundParams,
    instance: &Instance,
    store: &RelevantStore,
    cfg: &TrainConfig,
    training: bool,
    rng: &mut R,
) -> Result<InstanceNodes, TrainError> {
    let x = encoder::embed(g, bound.words, bound.positions, instance, cfg.t_max);
    let mut mask = vec![false; cfg.t_max];
    let len = instance.tokens.len().min(cfg.t_max);
    mask[..len].fill(true);
    let enc = encoder::encode_bidirectional(
        g,
        x,
        &mask,
        &bound.gru_fwd,
        &bound.gru_bwd,
        cfg.dropout_p,
        training,
        rng,
    );
    let (feature, word_weights) = encoder::word_attention(g, &enc, bound.query)?;
    let (blended, sentence_weights) = if cfg.sentence_attention {
        let (s, alpha) = attend_sentences(
            g,
            feature,
            &instance.pair_key,
            store,
            bound.feature_scale,
            bound.relation_query,
        );
        (s, Some(alpha))
    } else {
        (feature, None)
    };
    let probs = classify(g, blended, bound.cls_weight, bound.cls_bias);
    Ok(InstanceNodes {
        feature,
        blended,
        probs,
        word_weights,
        sentence_weights,
    })
}

/// Cross-entropy loss of one instance: negative log of the probability
/// assigned to the gold class (floored before the log).
pub fn instance_loss(g: &mut Graph, probs: NodeId, label: DdiLabel) -> NodeId {
    g.neg_log_likelihood(probs, label.index())
}

/// Batch objective: mean instance loss plus `l2_lambda` times the sum of
/// squared entries over `regularized`.
pub fn objective(
    g: &mut Graph,
    losses: &[NodeId],
    regularized: &[NodeId],
    l2_lambda: f64,
) -> Result<NodeId, TrainError> {
    if losses.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let stacked = g.concat(losses);
    let total = g.sum(stacked);
    let mut objective = g.scale(total, 1.0 / losses.len() as f64);
    if l2_lambda > 0.0 {
        for &param in regularized {
            let sq = g.mul(param, param);
            let ssq = g.sum(sq);
            let weighted = g.scale(ssq, l2_lambda);
            objective = g.add(objective, weighted);
        }
    }
    Ok(objective)
}

/// Encoded data ready for the training loop.
pub struct TrainingData {
    pub vocab: Vocabulary,
    pub train: Vec<Instance>,
    pub heldout: Vec<Instance>,
    /// Truncation-rejected held-out instances, scored as predicted-False.
    pub heldout_rejected: Vec<(InstanceSource, DdiLabel)>,
    pub train_rejected: usize,
    pub skipped_pairs: usize,
}

/// How to carve out the held-out split used for the trace.
pub enum HeldoutSpec<'a> {
    /// Hash document ids and hold out roughly this fraction of documents.
    FractionOfDocs(f64),
    /// Use an explicit corpus (for example the test split) for the trace.
    Sentences(&'a [RawSentence]),
}

fn doc_hash(doc_id: &str) -> u64 {
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    doc_id.hash(&mut hasher);
    hasher.finish()
}

/// Blind, tokenize, split, and encode a parsed corpus. The vocabulary is
/// built from the training split only.
pub fn prepare_data(
    sentences: &[RawSentence],
    heldout: HeldoutSpec,
    cfg: &TrainConfig,
) -> Result<TrainingData, TrainError> {
    cfg.validate()?;
    let (train_sentences, heldout_sentences): (Vec<&RawSentence>, Vec<&RawSentence>) = match heldout
    {
        HeldoutSpec::FractionOfDocs(fraction) => {
            let threshold = (fraction * 10_000.0) as u64;
            sentences
                .iter()
                .partition(|s| doc_hash(&s.doc_id) % 10_000 >= threshold)
        }
        HeldoutSpec::Sentences(other) => (sentences.iter().collect(), other.iter().collect()),
    };

    let mut skipped_pairs = 0;
    let mut blind_all = |list: &[&RawSentence]| {
        let mut out = Vec::new();
        for sentence in list {
            let (instances, skipped) = blind_instances(sentence);
            for skip in &skipped {
                log::warn!("skipping {}: {}", skip.source, skip.reason);
            }
            skipped_pairs += skipped.len();
            out.extend(instances);
        }
        out
    };
    let train_blinded = blind_all(&train_sentences);
    let heldout_blinded = blind_all(&heldout_sentences);

    let vocab = Vocabulary::build(&train_blinded, cfg.min_count)?;

    let mut train = Vec::new();
    let mut train_rejected = 0;
    for blinded in &train_blinded {
        match encode_instance(blinded, &vocab, cfg.t_max) {
            Ok(instance) => train.push(instance),
            Err(CorpusError::DrugTruncated { instance }) => {
                log::warn!(
                    "training instance {} rejected: drug token truncated",
                    instance
                );
                train_rejected += 1;
            }
            Err(other) => return Err(other.into()),
        }
    }
    let mut heldout_instances = Vec::new();
    let mut heldout_rejected = Vec::new();
    for blinded in &heldout_blinded {
        match encode_instance(blinded, &vocab, cfg.t_max) {
            Ok(instance) => heldout_instances.push(instance),
            Err(CorpusError::DrugTruncated { instance }) => {
                heldout_rejected.push((instance, blinded.label));
            }
            Err(other) => return Err(other.into()),
        }
    }

    Ok(TrainingData {
        vocab,
        train,
        heldout: heldout_instances,
        heldout_rejected,
        train_rejected,
        skipped_pairs,
    })
}

/// One trace record: the step, that step's batch objective, and the
/// held-out objective and macro F1.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub train_j: f64,
    pub heldout_j: f64,
    pub heldout_f1: f64,
}

/// Callbacks the training loop drives.
pub trait TrainObserver {
    fn on_trace(&mut self, row: &TraceRow) -> Result<(), TrainError> {
        let _ = row;
        Ok(())
    }
    fn on_checkpoint(&mut self, step: usize, model: &Model) -> Result<(), TrainError> {
        let _ = (step, model);
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Run the training loop: seeded initialization (optionally overlaid with
/// pretrained word vectors), uniform-with-replacement mini-batches, the
/// Adam update, and store growth after each optimizer step. Emits a trace
/// row every `eval_every` steps and a checkpoint callback every
/// `checkpoint_every` steps.
pub fn train(
    data: &TrainingData,
    cfg: &TrainConfig,
    pretrained: Option<&Path>,
    observer: &mut dyn TrainObserver,
) -> Result<(Model, Vec<TraceRow>), TrainError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(cfg, data.vocab.len(), &mut rng);
    if let Some(path) = pretrained {
        encoder::load_pretrained(&mut params.embeddings, &data.vocab, path)?;
    }
    let mut model = Model {
        config: cfg.clone(),
        vocab: data.vocab.clone(),
        params,
        store: RelevantStore::new(cfg.store_capacity),
    };
    let mut adam = AdamState::new(cfg.adam);
    let mut trace = Vec::new();

    for step in 1..=cfg.max_steps {
        let batch: Vec<&Instance> = (0..cfg.batch_size)
            .map(|_| &data.train[rng.gen_range(0..data.train.len())])
            .collect();

        let mut g = Graph::new();
        let bound = bind(&mut g, &model.params, cfg, true);
        let mut losses = Vec::with_capacity(batch.len());
        let mut captured = Vec::with_capacity(batch.len());
        for instance in &batch {
            let nodes =
                forward_instance(&mut g, &bound, instance, &model.store, cfg, true, &mut rng)?;
            losses.push(instance_loss(&mut g, nodes.probs, instance.label));
            captured.push((instance.pair_key.clone(), nodes.feature));
        }
        let reg: Vec<NodeId> = bound.trainable.iter().map(|&(_, id)| id).collect();
        let j = objective(&mut g, &losses, &reg, cfg.l2_lambda)?;
        let train_j = g.value(j).data()[0];
        g.backward(j);

        let grads: BTreeMap<String, Vec<f64>> = bound
            .trainable
            .iter()
            .map(|&(name, id)| (name.to_string(), g.grad(id)))
            .collect();
        let mut entries: Vec<(&str, &mut Tensor)> = model
            .params
            .named_mut()
            .into_iter()
            .filter(|(name, _)| grads.contains_key(*name))
            .collect();
        adam.step(&mut entries, &grads);

        // stored features reflect this step's forward pass, written after
        // the optimizer update
        if cfg.sentence_attention {
            for (key, feature) in captured {
                model.store.insert(key, g.value(feature).data().to_vec());
            }
        }

        if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
            let (heldout_j, heldout_f1) = evaluate_heldout(&model, data)?;
            let row = TraceRow {
                step,
                train_j,
                heldout_j,
                heldout_f1,
            };
            observer.on_trace(&row)?;
            trace.push(row);
        }
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            observer.on_checkpoint(step, &model)?;
        }
    }
    Ok((model, trace))
}

/// Held-out objective (same form as the training objective, evaluated in
/// inference mode) and macro F1. Rejected instances score as
/// predicted-False. Returns NaN metrics when there is nothing to evaluate.
pub fn evaluate_heldout(model: &Model, data: &TrainingData) -> Result<(f64, f64), TrainError> {
    if data.heldout.is_empty() && data.heldout_rejected.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let cfg = &model.config;
    let mut golds = Vec::new();
    let mut predictions = Vec::new();
    let mut heldout_j = f64::NAN;

    if !data.heldout.is_empty() {
        let mut g = Graph::new();
        let bound = bind(&mut g, &model.params, cfg, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut losses = Vec::with_capacity(data.heldout.len());
        for instance in &data.heldout {
            let nodes =
                forward_instance(&mut g, &bound, instance, &model.store, cfg, false, &mut rng)?;
            losses.push(instance_loss(&mut g, nodes.probs, instance.label));
            golds.push(instance.label);
            predictions.push(argmax_label(g.value(nodes.probs).data()));
        }
        let stacked = g.concat(&losses);
        let total = g.sum(stacked);
        let mean = g.scale(total, 1.0 / losses.len() as f64);
        heldout_j = g.value(mean).data()[0]
            + cfg.l2_lambda * model.params.l2_penalty(cfg.dynamic_embeddings);
    }
    for (_, label) in &data.heldout_rejected {
        golds.push(*label);
        predictions.push(DdiLabel::False);
    }
    let cm = evaluation::ConfusionMatrix::from_pairs(&golds, &predictions)
        .expect("aligned lists by construction");
    Ok((heldout_j, evaluation::metrics(&cm).f1))
}

/// Index of the largest probability; ties break toward the lower index.
pub fn argmax_label(probs: &[f64]) -> DdiLabel {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    DdiLabel::from_index(best).expect("probability vector has five entries")
}

/// One scored instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub source: InstanceSource,
    pub gold: DdiLabel,
    pub predicted: DdiLabel,
    pub probs: [f64; DdiLabel::COUNT],
    /// Word-attention pooled vector (empty when `truncated`).
    pub feature: Vec<f64>,
    /// Sentence-attention blended vector (empty when `truncated`).
    pub blended: Vec<f64>,
    /// Rejected before encoding; scored as predicted-False.
    pub truncated: bool,
}

const PREDICT_CHUNK: usize = 64;

/// Deterministic scoring of already-encoded instances (inference mode, the
/// store frozen as loaded).
pub fn predict_instances(
    model: &Model,
    instances: &[Instance],
) -> Result<Vec<Prediction>, TrainError> {
    let cfg = &model.config;
    let mut out = Vec::with_capacity(instances.len());
    for chunk in instances.chunks(PREDICT_CHUNK.max(1)) {
        let mut g = Graph::new();
        let bound = bind(&mut g, &model.params, cfg, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for instance in chunk {
            let nodes =
                forward_instance(&mut g, &bound, instance, &model.store, cfg, false, &mut rng)?;
            let probs_vec = g.value(nodes.probs).data();
            let mut probs = [0.0; DdiLabel::COUNT];
            probs.copy_from_slice(probs_vec);
            out.push(Prediction {
                source: instance.source.clone(),
                gold: instance.label,
                predicted: argmax_label(&probs),
                probs,
                feature: g.value(nodes.feature).data().to_vec(),
                blended: g.value(nodes.blended).data().to_vec(),
                truncated: false,
            });
        }
    }
    Ok(out)
}

/// Blind, encode, and score a parsed corpus with the model's vocabulary.
/// Truncation-rejected instances come back flagged with predicted-False
/// and unit probability on False; blinding skips are counted.
pub fn predict_corpus(
    model: &Model,
    sentences: &[RawSentence],
) -> Result<(Vec<Prediction>, usize), TrainError> {
    let cfg = &model.config;
    let mut skipped_pairs = 0;
    let mut encoded = Vec::new();
    let mut order: Vec<Result<Instance, (InstanceSource, DdiLabel)>> = Vec::new();
    for sentence in sentences {
        let (blinded, skipped) = blind_instances(sentence);
        for skip in &skipped {
            log::warn!("skipping {}: {}", skip.source, skip.reason);
        }
        skipped_pairs += skipped.len();
        for b in blinded {
            match encode_instance(&b, &model.vocab, cfg.t_max) {
                Ok(instance) => {
                    order.push(Ok(instance.clone()));
                    encoded.push(instance);
                }
                Err(CorpusError::DrugTruncated { instance }) => {
                    order.push(Err((instance, b.label)));
                }
                Err(other) => return Err(other.into()),
            }
        }
    }
    let scored = predict_instances(model, &encoded)?;
    let mut scored_iter = scored.into_iter();
    let mut out = Vec::with_capacity(order.len());
    for slot in order {
        match slot {
            Ok(_) => out.push(scored_iter.next().expect("one score per encoded instance")),
            Err((source, gold)) => {
                let mut probs = [0.0; DdiLabel::COUNT];
                probs[DdiLabel::False.index()] = 1.0;
                out.push(Prediction {
                    source,
                    gold,
                    predicted: DdiLabel::False,
                    probs,
                    feature: Vec::new(),
                    blended: Vec::new(),
                    truncated: true,
                });
            }
        }
    }
    Ok((out, skipped_pairs))
}
