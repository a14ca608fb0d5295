/* C interface for the drug-drug interaction classifier. */

#pragma once

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes returned by every fallible entry point.
typedef enum DdiStatus {
  DDI_STATUS_OK = 0,
  DDI_STATUS_NULL_ARGUMENT = 1,
  DDI_STATUS_INVALID_UTF8 = 2,
  DDI_STATUS_IO_ERROR = 3,
  DDI_STATUS_FORMAT_ERROR = 4,
  DDI_STATUS_INVALID_ARGUMENT = 5,
  DDI_STATUS_INTERNAL_ERROR = 6,
} DdiStatus;

// Opaque handle around a loaded model.
typedef struct DdiModel DdiModel;

// Character span of a drug mention inside the sentence passed to
// [`ddi_model_classify`]. Offsets count Unicode scalars; `end` is
// inclusive. `role` is 1 for the first target drug, 2 for the second,
// 0 for any other drug mention.
typedef struct DdiSpan {
  uint64_t start;
  uint64_t end;
  uint32_t role;
} DdiSpan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message on this thread into `buf` (NUL-terminated,
// truncated to `cap`). Returns the full message length in bytes, or 0
// when there is no pending error.
//
// # Safety
// `buf` must point to `cap` writable bytes, or be NULL (in which case only
// the length is returned).
uintptr_t ddi_last_error_message(char *buf, uintptr_t cap);

// Static version string of the library.
const char *ddi_version(void);

// Load a checkpoint from disk. On success `*out` owns the model; release
// it with [`ddi_model_free`].
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum DdiStatus ddi_model_load(const char *path, struct DdiModel **out);

// Release a model handle. NULL is a no-op.
//
// # Safety
// `model` must be NULL or a pointer returned by [`ddi_model_load`] that
// has not been freed yet.
void ddi_model_free(struct DdiModel *model);

// Hidden dimension of the loaded model's feature vectors.
//
// # Safety
// `model` must be a live handle from [`ddi_model_load`].
uintptr_t ddi_model_hidden_dim(const struct DdiModel *model);

// Vocabulary size of the loaded model.
//
// # Safety
// `model` must be a live handle from [`ddi_model_load`].
uintptr_t ddi_model_vocab_size(const struct DdiModel *model);

// Classify one drug pair in a sentence. `spans` lists every drug mention;
// exactly one span must carry role 1 and one role 2. On success
// `*out_label` holds the predicted class index (0 False, 1 Mechanism,
// 2 Effect, 3 Advise, 4 Int) and `out_probs`, when non-NULL, receives the
// five class probabilities.
//
// # Safety
// `model` must be a live handle; `text` a NUL-terminated string; `spans`
// must point to `n_spans` elements; `out_label` must be valid;
// `out_probs` must be NULL or point to five doubles.
enum DdiStatus ddi_model_classify(const struct DdiModel *model,
                                  const char *text,
                                  const struct DdiSpan *spans,
                                  uintptr_t n_spans,
                                  uint32_t *out_label,
                                  double *out_probs);

// Score a whole annotated XML corpus and write the predictions TSV.
//
// # Safety
// `model` must be a live handle; both paths must be NUL-terminated
// strings.
enum DdiStatus ddi_model_predict_file(const struct DdiModel *model,
                                      const char *corpus_path,
                                      const char *out_tsv_path);

// Macro precision/recall/F1 from a row-major 5x5 gold-by-predicted count
// matrix (label order False, Mechanism, Effect, Advise, Int).
//
// # Safety
// `counts` must point to 25 values; the three outputs must be NULL or
// valid pointers.
enum DdiStatus ddi_metrics_from_counts(const uint64_t *counts,
                                       double *out_precision,
                                       double *out_recall,
                                       double *out_f1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
