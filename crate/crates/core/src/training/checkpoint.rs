//! Full-model checkpoint: the parameter container followed by the
//! vocabulary, the relevant-sentence store, and the config echo.
//!
//! Everything serializes in a fixed order (canonical parameter names,
//! key-sorted store), so saving, loading, and saving again is
//! byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::{PairKey, Vocabulary};
use crate::encoder::{position_rows, EmbeddingTables, GruParams, WordAttentionParams};
use crate::numerics::container::{
    self, read_string, read_u64, write_bytes, write_u64, ContainerError,
};
use crate::numerics::Tensor;
use crate::sentence_attention::{ClassifierParams, RelevantStore, SentenceAttentionParams};

use super::{Model, ModelParams, TrainConfig, PARAM_NAMES};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint config: {0}")]
    Config(#[from] serde_json::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

pub fn save(model: &Model, path: &Path) -> Result<(), CheckpointError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(&mut file, model)?;
    file.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model, CheckpointError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_model(&mut file)
}

pub fn write_model<W: Write>(w: &mut W, model: &Model) -> Result<(), CheckpointError> {
    container::write_tensors(w, &model.params.named())?;

    let vocab_tokens = model.vocab.tokens();
    write_u64(w, vocab_tokens.len() as u64)?;
    for token in vocab_tokens {
        write_bytes(w, token.as_bytes())?;
    }
    write_u64(w, model.vocab.fingerprint())?;

    write_u64(w, model.store.capacity() as u64)?;
    write_u64(w, model.store.len() as u64)?;
    for (key, buffer) in model.store.iter() {
        write_bytes(w, key.name1.as_bytes())?;
        write_bytes(w, key.name2.as_bytes())?;
        write_u64(w, buffer.len() as u64)?;
        let dim = buffer.front().map(Vec::len).unwrap_or(model.config.d_h);
        write_u64(w, dim as u64)?;
        for vector in buffer {
            for &v in vector {
                container::write_f64(w, v)?;
            }
        }
    }

    let config_json = serde_json::to_vec(&model.config)?;
    write_bytes(w, &config_json)?;
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<Model, CheckpointError> {
    let tensors = container::read_tensors(r)?;

    let vocab_len = read_u64(r)? as usize;
    let mut tokens = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        tokens.push(read_string(r, 1 << 20)?);
    }
    let vocab = Vocabulary::from_tokens(tokens)
        .map_err(|_| CheckpointError::Corrupt("vocabulary reserved prefix is wrong".to_string()))?;
    let stored_fingerprint = read_u64(r)?;
    if stored_fingerprint != vocab.fingerprint() {
        return Err(CheckpointError::ShapeMismatch(format!(
            "unknown vocabulary hash {:#x}, checkpoint carries {:#x}",
            vocab.fingerprint(),
            stored_fingerprint
        )));
    }

    let capacity = read_u64(r)? as usize;
    if capacity == 0 {
        return Err(CheckpointError::Corrupt(
            "store capacity is zero".to_string(),
        ));
    }
    let mut store = RelevantStore::new(capacity);
    let n_keys = read_u64(r)? as usize;
    let mut store_dim = None;
    for _ in 0..n_keys {
        let name1 = read_string(r, 1 << 20)?;
        let name2 = read_string(r, 1 << 20)?;
        let n_vecs = read_u64(r)? as usize;
        let dim = read_u64(r)? as usize;
        store_dim = Some(dim);
        for _ in 0..n_vecs {
            let mut vector = Vec::with_capacity(dim);
            for _ in 0..dim {
                vector.push(container::read_f64(r)?);
            }
            store.insert(
                PairKey {
                    name1: name1.clone(),
                    name2: name2.clone(),
                },
                vector,
            );
        }
    }

    let config_bytes = {
        let len = container::read_u32(r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        buf
    };
    let config: TrainConfig = serde_json::from_slice(&config_bytes)?;

    let params = assemble_params(tensors, &config, vocab.len())?;
    if let Some(dim) = store_dim {
        if dim != config.d_h {
            return Err(CheckpointError::ShapeMismatch(format!(
                "store vectors have dimension {}, config says {}",
                dim, config.d_h
            )));
        }
    }
    Ok(Model {
        config,
        vocab,
        params,
        store,
    })
}

fn assemble_params(
    tensors: Vec<(String, Tensor)>,
    cfg: &TrainConfig,
    vocab_len: usize,
) -> Result<ModelParams, CheckpointError> {
    let mut map: std::collections::BTreeMap<String, Tensor> = tensors.into_iter().collect();
    let mut take = |name: &str, shape: &[usize]| -> Result<Tensor, CheckpointError> {
        let tensor = map
            .remove(name)
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing parameter {}", name)))?;
        if tensor.shape() != shape {
            return Err(CheckpointError::ShapeMismatch(format!(
                "{} has shape {:?}, expected {:?}",
                name,
                tensor.shape(),
                shape
            )));
        }
        Ok(tensor)
    };

    let d = cfg.d();
    let d_h = cfg.d_h;
    type Take<'a> = &'a mut dyn FnMut(&str, &[usize]) -> Result<Tensor, CheckpointError>;
    let gru = |take: Take, prefix: &str| -> Result<GruParams, CheckpointError> {
        Ok(GruParams {
            reset_input: take(&format!("{}.reset_input", prefix), &[d_h, d])?,
            reset_hidden: take(&format!("{}.reset_hidden", prefix), &[d_h, d_h])?,
            candidate_input: take(&format!("{}.candidate_input", prefix), &[d_h, d])?,
            candidate_hidden: take(&format!("{}.candidate_hidden", prefix), &[d_h, d_h])?,
            update_input: take(&format!("{}.update_input", prefix), &[d_h, d])?,
            update_hidden: take(&format!("{}.update_hidden", prefix), &[d_h, d_h])?,
        })
    };

    let embeddings = EmbeddingTables {
        words: take("embeddings.words", &[vocab_len, cfg.d_we])?,
        positions: take(
            "embeddings.positions",
            &[position_rows(cfg.t_max), cfg.d_pe],
        )?,
        trainable: cfg.dynamic_embeddings,
    };
    let gru_fwd = gru(&mut take, "gru_fwd")?;
    let gru_bwd = gru(&mut take, "gru_bwd")?;
    let params = ModelParams {
        embeddings,
        gru_fwd,
        gru_bwd,
        word_attention: WordAttentionParams {
            query: take("word_attention.query", &[d_h])?,
        },
        sentence_attention: SentenceAttentionParams {
            feature_scale: take("sentence_attention.feature_scale", &[d_h])?,
            relation_query: take("sentence_attention.relation_query", &[d_h])?,
        },
        classifier: ClassifierParams {
            weight: take("classifier.weight", &[crate::corpus::DdiLabel::COUNT, d_h])?,
            bias: take("classifier.bias", &[crate::corpus::DdiLabel::COUNT])?,
        },
    };
    if !map.is_empty() {
        let extra: Vec<String> = map.into_keys().collect();
        return Err(CheckpointError::Corrupt(format!(
            "unexpected parameters in checkpoint: {:?}",
            extra
        )));
    }
    debug_assert_eq!(params.named().len(), PARAM_NAMES.len());
    Ok(params)
}
