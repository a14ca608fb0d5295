//! Sentence encoding: embedding lookup, bidirectional GRU with timestep
//! dropout, and word-level attention pooling.

use std::io::BufRead;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{Instance, Vocabulary, PAD};
use crate::numerics::{GatherPlan, Graph, NodeId, Tensor};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("attention over a fully padded sentence")]
    AllPadded,
    #[error("embedding file {path}: {detail}")]
    BadEmbeddingFile { path: String, detail: String },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Word and position lookup tables. Every token embeds into
/// `d = d_we + 2 * d_pe` dimensions: its word vector plus one position
/// vector per relative distance to each target drug. The position table has
/// one row per clipped distance in `[-(t_max-1), t_max-1]` plus a reserved
/// padding row; the padding rows of both tables are zero and stay zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTables {
    pub words: Tensor,
    pub positions: Tensor,
    pub trainable: bool,
}

impl EmbeddingTables {
    pub fn init<R: Rng>(
        vocab_size: usize,
        d_we: usize,
        d_pe: usize,
        t_max: usize,
        trainable: bool,
        rng: &mut R,
    ) -> Self {
        let mut words = Tensor::uniform(&[vocab_size, d_we], -0.05, 0.05, rng);
        for q in 0..d_we {
            words.data_mut()[PAD * d_we + q] = 0.0;
        }
        let rows = position_rows(t_max);
        let mut positions = Tensor::uniform(&[rows, d_pe], -0.05, 0.05, rng);
        let pad_row = pad_distance_row(t_max);
        for q in 0..d_pe {
            positions.data_mut()[pad_row * d_pe + q] = 0.0;
        }
        EmbeddingTables {
            words,
            positions,
            trainable,
        }
    }

    pub fn d_we(&self) -> usize {
        self.words.cols()
    }

    pub fn d_pe(&self) -> usize {
        self.positions.cols()
    }

    /// Total embedded dimension `d_we + 2 * d_pe`.
    pub fn dim(&self) -> usize {
        self.d_we() + 2 * self.d_pe()
    }
}

/// Rows of the position table: `2 * t_max - 1` achievable distances plus
/// the reserved padding row.
pub fn position_rows(t_max: usize) -> usize {
    2 * t_max
}

pub fn pad_distance_row(t_max: usize) -> usize {
    2 * t_max - 1
}

/// Row index for a relative distance, clipped to the achievable range.
pub fn distance_row(delta: isize, t_max: usize) -> usize {
    let limit = t_max as isize - 1;
    let clipped = delta.clamp(-limit, limit);
    (clipped + limit) as usize
}

/// Counters from loading a pretrained embedding file.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct PretrainedStats {
    /// Vocabulary tokens whose vectors came from the file.
    pub loaded: usize,
    /// File tokens skipped because they are not in the vocabulary.
    pub skipped: usize,
    /// Vocabulary tokens absent from the file (left at random init).
    pub missing: usize,
}

/// Load GloVe-style text vectors: one token per line followed by `d_we`
/// space-separated decimals. Vocabulary tokens absent from the file keep
/// their random initialization; the padding row is forced back to zero.
pub fn load_pretrained(
    tables: &mut EmbeddingTables,
    vocab: &Vocabulary,
    path: &Path,
) -> Result<PretrainedStats, EncoderError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| EncoderError::Io {
        path: display.clone(),
        source,
    })?;
    let d_we = tables.d_we();
    let mut stats = PretrainedStats::default();
    let mut seen = vec![false; vocab.len()];
    for (line_no, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EncoderError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap();
        if !vocab.contains(token) {
            stats.skipped += 1;
            continue;
        }
        let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| EncoderError::BadEmbeddingFile {
            path: display.clone(),
            detail: format!("line {}: {}", line_no + 1, e),
        })?;
        if values.len() != d_we {
            return Err(EncoderError::BadEmbeddingFile {
                path: display.clone(),
                detail: format!(
                    "line {}: expected {} values, found {}",
                    line_no + 1,
                    d_we,
                    values.len()
                ),
            });
        }
        let row = vocab.lookup(token);
        if row != PAD {
            tables.words.data_mut()[row * d_we..(row + 1) * d_we].copy_from_slice(&values);
        }
        seen[row] = true;
        stats.loaded += 1;
    }
    stats.missing = seen.iter().filter(|&&s| !s).count();
    log::info!(
        "pretrained embeddings: {} loaded, {} not in vocabulary, {} vocabulary tokens randomly initialized",
        stats.loaded,
        stats.skipped,
        stats.missing
    );
    Ok(stats)
}

/// GRU weights for one direction. There are no bias terms.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub reset_input: Tensor,
    pub reset_hidden: Tensor,
    pub candidate_input: Tensor,
    pub candidate_hidden: Tensor,
    pub update_input: Tensor,
    pub update_hidden: Tensor,
}

impl GruParams {
    pub fn init<R: Rng>(d: usize, d_h: usize, rng: &mut R) -> Self {
        GruParams {
            reset_input: Tensor::uniform(&[d_h, d], -0.1, 0.1, rng),
            reset_hidden: Tensor::uniform(&[d_h, d_h], -0.1, 0.1, rng),
            candidate_input: Tensor::uniform(&[d_h, d], -0.1, 0.1, rng),
            candidate_hidden: Tensor::uniform(&[d_h, d_h], -0.1, 0.1, rng),
            update_input: Tensor::uniform(&[d_h, d], -0.1, 0.1, rng),
            update_hidden: Tensor::uniform(&[d_h, d_h], -0.1, 0.1, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.reset_input.rows()
    }
}

/// Tape handles for one direction's GRU weights.
#[derive(Clone, Copy, Debug)]
pub struct GruNodes {
    pub reset_input: NodeId,
    pub reset_hidden: NodeId,
    pub candidate_input: NodeId,
    pub candidate_hidden: NodeId,
    pub update_input: NodeId,
    pub update_hidden: NodeId,
}

pub fn bind_gru(g: &mut Graph, p: &GruParams, requires_grad: bool) -> GruNodes {
    GruNodes {
        reset_input: g.leaf(p.reset_input.clone(), requires_grad),
        reset_hidden: g.leaf(p.reset_hidden.clone(), requires_grad),
        candidate_input: g.leaf(p.candidate_input.clone(), requires_grad),
        candidate_hidden: g.leaf(p.candidate_hidden.clone(), requires_grad),
        update_input: g.leaf(p.update_input.clone(), requires_grad),
        update_hidden: g.leaf(p.update_hidden.clone(), requires_grad),
    }
}

/// Word-level attention weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WordAttentionParams {
    pub query: Tensor,
}

impl WordAttentionParams {
    pub fn init<R: Rng>(d_h: usize, rng: &mut R) -> Self {
        WordAttentionParams {
            query: Tensor::uniform(&[d_h], -0.1, 0.1, rng),
        }
    }
}

/// Embed an instance into a `[d, t_max]` matrix: column `i` concatenates
/// the word vector with the position vectors for the clipped distances
/// `i - u` and `i - v`. Padding columns are exactly zero.
pub fn embed(
    g: &mut Graph,
    words: NodeId,
    positions: NodeId,
    instance: &Instance,
    t_max: usize,
) -> NodeId {
    let len = instance.tokens.len().min(t_max);
    let u = instance.drug1_pos as isize;
    let v = instance.drug2_pos as isize;
    let plan = GatherPlan {
        word_rows: instance.tokens[..len].to_vec(),
        pos1_rows: (0..len)
            .map(|i| distance_row(i as isize - u, t_max))
            .collect(),
        pos2_rows: (0..len)
            .map(|i| distance_row(i as isize - v, t_max))
            .collect(),
        t_max,
    };
    g.embed(words, positions, plan)
}

/// One GRU step: reset gate, candidate state, update gate, convex blend.
pub fn gru_step(g: &mut Graph, x: NodeId, h_prev: NodeId, p: &GruNodes) -> NodeId {
    let d_h = g.value(h_prev).numel();
    let rx = g.matmul(p.reset_input, x);
    let rh = g.matmul(p.reset_hidden, h_prev);
    let r_pre = g.add(rx, rh);
    let reset = g.sigmoid(r_pre);

    let gated = g.mul(reset, h_prev);
    let cx = g.matmul(p.candidate_input, x);
    let ch = g.matmul(p.candidate_hidden, gated);
    let c_pre = g.add(cx, ch);
    let candidate = g.tanh(c_pre);

    let zx = g.matmul(p.update_input, x);
    let zh = g.matmul(p.update_hidden, h_prev);
    let z_pre = g.add(zx, zh);
    let update = g.sigmoid(z_pre);

    let keep = g.mul(update, h_prev);
    let ones = g.constant(Tensor::vector(vec![1.0; d_h]));
    let inv = g.sub(ones, update);
    let took = g.mul(inv, candidate);
    g.add(keep, took)
}

/// Bidirectionally encoded sentence: `hidden` is `[d_h, t_max]` with the
/// forward and backward states summed per column; `mask` marks real
/// (non-padding) positions. Padding columns are exactly zero.
pub struct EncodedSentence {
    pub hidden: NodeId,
    pub mask: Vec<bool>,
}

/// Run both GRU directions over the embedded sentence. Padding positions
/// are skipped by the recurrence (the state passes through unchanged) and
/// contribute zero columns. During training each real timestep is dropped
/// independently with probability `dropout_p`: a dropped step contributes
/// a zero column and the recurrence state passes through, exactly like
/// padding. At inference nothing is dropped and the output is scaled by
/// `1 - dropout_p`.
#[allow(clippy::too_many_arguments)]
pub fn encode_bidirectional<R: Rng>(
    g: &mut Graph,
    x: NodeId,
    mask: &[bool],
    fwd: &GruNodes,
    bwd: &GruNodes,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> EncodedSentence {
    let t_max = mask.len();
    let d_h = g.value(fwd.reset_input).rows();
    debug_assert_eq!(g.value(x).cols(), t_max);

    let kept: Vec<bool> = mask
        .iter()
        .map(|&real| real && (!training || rng.gen::<f64>() >= dropout_p))
        .collect();

    let zero = g.constant(Tensor::zeros(&[d_h]));
    let mut forward: Vec<NodeId> = vec![zero; t_max];
    let mut state = zero;
    for i in 0..t_max {
        if kept[i] {
            let xi = g.column(x, i);
            state = gru_step(g, xi, state, fwd);
            forward[i] = state;
        }
    }
    let mut backward: Vec<NodeId> = vec![zero; t_max];
    state = zero;
    for i in (0..t_max).rev() {
        if kept[i] {
            let xi = g.column(x, i);
            state = gru_step(g, xi, state, bwd);
            backward[i] = state;
        }
    }

    let columns: Vec<NodeId> = (0..t_max)
        .map(|i| {
            if kept[i] {
                g.add(forward[i], backward[i])
            } else {
                zero
            }
        })
        .collect();
    let mut hidden = g.concat_cols(&columns);
    if !training && dropout_p > 0.0 {
        hidden = g.scale(hidden, 1.0 - dropout_p);
    }
    EncodedSentence {
        hidden,
        mask: mask.to_vec(),
    }
}

/// Word-level attention pooling: weights over real positions from the
/// query against `tanh` of the encoding, then a `tanh`-squashed weighted
/// column sum. Returns the pooled feature vector and the weights (exactly
/// zero at padding positions).
pub fn word_attention(
    g: &mut Graph,
    enc: &EncodedSentence,
    query: NodeId,
) -> Result<(NodeId, NodeId), EncoderError> {
    if !enc.mask.iter().any(|&m| m) {
        return Err(EncoderError::AllPadded);
    }
    let squashed = g.tanh(enc.hidden);
    let scores = g.vec_mat(query, squashed);
    let weights = g.masked_softmax(scores, enc.mask.clone());
    let pooled = g.matmul(enc.hidden, weights);
    let feature = g.tanh(pooled);
    Ok((feature, weights))
}
