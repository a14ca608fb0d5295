//! C ABI for the drug-drug interaction classifier.
//!
//! The surface is a loaded-model handle plus stateless scoring helpers.
//! Handles are opaque; every function returns a [`DdiStatus`] and never
//! unwinds across the boundary. On failure a thread-local message is
//! available through [`ddi_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ddi_attn::corpus::{self, DdiLabel, Entity, GoldPair, RawSentence};
use ddi_attn::evaluation::{metrics, ConfusionMatrix};
use ddi_attn::training::{checkpoint, predict_corpus, Model};

/// Result codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdiStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    IoError = 3,
    FormatError = 4,
    InvalidArgument = 5,
    InternalError = 6,
}

/// Character span of a drug mention inside the sentence passed to
/// [`ddi_model_classify`]. Offsets count Unicode scalars; `end` is
/// inclusive. `role` is 1 for the first target drug, 2 for the second,
/// 0 for any other drug mention.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DdiSpan {
    pub start: u64,
    pub end: u64,
    pub role: u32,
}

/// Opaque handle around a loaded model.
pub struct DdiModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Copy the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length in bytes, or 0
/// when there is no pending error.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be NULL (in which case only
/// the length is returned).
#[no_mangle]
pub unsafe extern "C" fn ddi_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let borrow = slot.borrow();
        let Some(message) = borrow.as_ref() else {
            return 0;
        };
        let bytes = message.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // always terminate
            *buf.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

/// Static version string of the library.
#[no_mangle]
pub extern "C" fn ddi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, DdiStatus> {
    if ptr.is_null() {
        return Err(DdiStatus::NullArgument);
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| DdiStatus::InvalidUtf8)
}

fn guard(body: impl FnOnce() -> DdiStatus) -> DdiStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic across the C boundary".to_string());
            set_error(message);
            DdiStatus::InternalError
        }
    }
}

/// Load a checkpoint from disk. On success `*out` owns the model; release
/// it with [`ddi_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddi_model_load(path: *const c_char, out: *mut *mut DdiModel) -> DdiStatus {
    guard(|| {
        clear_error();
        if out.is_null() {
            return DdiStatus::NullArgument;
        }
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match checkpoint::load(Path::new(path)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(DdiModel { inner: model }));
                DdiStatus::Ok
            }
            Err(err) => {
                set_error(format!("{}", err));
                match err {
                    checkpoint::CheckpointError::Io(_) => DdiStatus::IoError,
                    _ => DdiStatus::FormatError,
                }
            }
        }
    })
}

/// Release a model handle. NULL is a no-op.
///
/// # Safety
/// `model` must be NULL or a pointer returned by [`ddi_model_load`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn ddi_model_free(model: *mut DdiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Hidden dimension of the loaded model's feature vectors.
///
/// # Safety
/// `model` must be a live handle from [`ddi_model_load`].
#[no_mangle]
pub unsafe extern "C" fn ddi_model_hidden_dim(model: *const DdiModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).inner.config.d_h
}

/// Vocabulary size of the loaded model.
///
/// # Safety
/// `model` must be a live handle from [`ddi_model_load`].
#[no_mangle]
pub unsafe extern "C" fn ddi_model_vocab_size(model: *const DdiModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).inner.vocab.len()
}

fn sentence_from_spans(text: &str, spans: &[DdiSpan]) -> Result<RawSentence, String> {
    let n_chars = text.chars().count();
    let mut entities = Vec::with_capacity(spans.len());
    let mut drug1 = None;
    let mut drug2 = None;
    for (i, span) in spans.iter().enumerate() {
        let (start, end) = (span.start as usize, span.end as usize);
        if start > end || end >= n_chars {
            return Err(format!(
                "span {} ({}-{}) outside sentence of {} characters",
                i, start, end, n_chars
            ));
        }
        let surface: String = text.chars().skip(start).take(end - start + 1).collect();
        let id = format!("e{}", i);
        match span.role {
            1 => {
                if drug1.replace(id.clone()).is_some() {
                    return Err("more than one span has role 1".to_string());
                }
            }
            2 => {
                if drug2.replace(id.clone()).is_some() {
                    return Err("more than one span has role 2".to_string());
                }
            }
            0 => {}
            other => return Err(format!("span {} has unknown role {}", i, other)),
        }
        entities.push(Entity {
            id,
            char_start: start,
            char_end: end,
            surface,
            drug_type: "drug".to_string(),
        });
    }
    let (Some(e1), Some(e2)) = (drug1, drug2) else {
        return Err("exactly one span with role 1 and one with role 2 are required".to_string());
    };
    Ok(RawSentence {
        doc_id: "api".to_string(),
        sent_id: "api.s0".to_string(),
        text: text.to_string(),
        entities,
        pairs: vec![GoldPair {
            id: "api.s0.p0".to_string(),
            e1,
            e2,
            label: DdiLabel::False,
        }],
    })
}

/// Classify one drug pair in a sentence. `spans` lists every drug mention;
/// exactly one span must carry role 1 and one role 2. On success
/// `*out_label` holds the predicted class index (0 False, 1 Mechanism,
/// 2 Effect, 3 Advise, 4 Int) and `out_probs`, when non-NULL, receives the
/// five class probabilities.
///
/// # Safety
/// `model` must be a live handle; `text` a NUL-terminated string; `spans`
/// must point to `n_spans` elements; `out_label` must be valid;
/// `out_probs` must be NULL or point to five doubles.
#[no_mangle]
pub unsafe extern "C" fn ddi_model_classify(
    model: *const DdiModel,
    text: *const c_char,
    spans: *const DdiSpan,
    n_spans: usize,
    out_label: *mut u32,
    out_probs: *mut f64,
) -> DdiStatus {
    guard(|| {
        clear_error();
        if model.is_null() || out_label.is_null() || (spans.is_null() && n_spans > 0) {
            return DdiStatus::NullArgument;
        }
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let spans = if n_spans == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(spans, n_spans)
        };
        let sentence = match sentence_from_spans(text, spans) {
            Ok(s) => s,
            Err(message) => {
                set_error(message);
                return DdiStatus::InvalidArgument;
            }
        };
        let model = &(*model).inner;
        match predict_corpus(model, std::slice::from_ref(&sentence)) {
            Ok((predictions, _)) if predictions.len() == 1 => {
                let p = &predictions[0];
                if p.truncated {
                    set_error("drug mention truncated past the maximum length".to_string());
                    return DdiStatus::InvalidArgument;
                }
                *out_label = p.predicted.index() as u32;
                if !out_probs.is_null() {
                    std::ptr::copy_nonoverlapping(p.probs.as_ptr(), out_probs, p.probs.len());
                }
                DdiStatus::Ok
            }
            Ok(_) => {
                set_error("blinding did not produce exactly one instance".to_string());
                DdiStatus::InvalidArgument
            }
            Err(err) => {
                set_error(format!("{}", err));
                DdiStatus::InternalError
            }
        }
    })
}

/// Score a whole annotated XML corpus and write the predictions TSV.
///
/// # Safety
/// `model` must be a live handle; both paths must be NUL-terminated
/// strings.
#[no_mangle]
pub unsafe extern "C" fn ddi_model_predict_file(
    model: *const DdiModel,
    corpus_path: *const c_char,
    out_tsv_path: *const c_char,
) -> DdiStatus {
    guard(|| {
        clear_error();
        if model.is_null() {
            return DdiStatus::NullArgument;
        }
        let corpus_path = match str_arg(corpus_path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let out_path = match str_arg(out_tsv_path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let model = &(*model).inner;
        let sentences = match corpus::parse_corpus(Path::new(corpus_path)) {
            Ok(s) => s,
            Err(err) => {
                set_error(format!("{}", err));
                return match err {
                    corpus::CorpusError::Io { .. } => DdiStatus::IoError,
                    _ => DdiStatus::FormatError,
                };
            }
        };
        let predictions = match predict_corpus(model, &sentences) {
            Ok((p, _)) => p,
            Err(err) => {
                set_error(format!("{}", err));
                return DdiStatus::InternalError;
            }
        };
        let file = match std::fs::File::create(Path::new(out_path)) {
            Ok(f) => f,
            Err(err) => {
                set_error(format!("{}", err));
                return DdiStatus::IoError;
            }
        };
        let mut writer = std::io::BufWriter::new(file);
        if let Err(err) = ddi_attn::cli::write_predictions(&mut writer, &predictions) {
            set_error(format!("{}", err));
            return DdiStatus::IoError;
        }
        DdiStatus::Ok
    })
}

/// Macro precision/recall/F1 from a row-major 5x5 gold-by-predicted count
/// matrix (label order False, Mechanism, Effect, Advise, Int).
///
/// # Safety
/// `counts` must point to 25 values; the three outputs must be NULL or
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ddi_metrics_from_counts(
    counts: *const u64,
    out_precision: *mut f64,
    out_recall: *mut f64,
    out_f1: *mut f64,
) -> DdiStatus {
    guard(|| {
        clear_error();
        if counts.is_null() {
            return DdiStatus::NullArgument;
        }
        let raw = std::slice::from_raw_parts(counts, 25);
        let mut matrix = [[0u64; 5]; 5];
        for (i, row) in matrix.iter_mut().enumerate() {
            row.copy_from_slice(&raw[i * 5..(i + 1) * 5]);
        }
        let report = metrics(&ConfusionMatrix::from_counts(matrix));
        if !out_precision.is_null() {
            *out_precision = report.precision;
        }
        if !out_recall.is_null() {
            *out_recall = report.recall;
        }
        if !out_f1.is_null() {
            *out_f1 = report.f1;
        }
        DdiStatus::Ok
    })
}
