#ifndef VTAPRED_H
#define VTAPRED_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Pass as `birth_year` when the birth year is unknown.
#define VTA_BIRTH_YEAR_UNKNOWN INT32_MIN

typedef enum VtaFeatureSet {
  // Eleven standard HRV metrics.
  VTA_FEATURE_SET_BASELINE11 = 0,
  // Mean, LF, HF, min and max RR over the most recent filtered beats.
  VTA_FEATURE_SET_CORE = 1,
} VtaFeatureSet;

typedef enum VtaStatus {
  VTA_STATUS_OK = 0,
  VTA_STATUS_NULL_POINTER = 1,
  VTA_STATUS_INVALID_ARGUMENT = 2,
  VTA_STATUS_IO = 3,
  VTA_STATUS_PARSE = 4,
  VTA_STATUS_DIMENSION = 5,
  VTA_STATUS_TOO_SHORT = 6,
  VTA_STATUS_NON_FINITE = 7,
  VTA_STATUS_CHECKPOINT = 8,
  VTA_STATUS_BUFFER_TOO_SMALL = 9,
  VTA_STATUS_INTERNAL = 10,
} VtaStatus;

// Opaque trained model.
typedef struct VtaModel VtaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *vta_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *vta_version(void);

// Number of features produced by the given configuration.
size_t vta_feature_count(enum VtaFeatureSet set, bool include_windowed);

// Extracts features from `n` RR intervals (ms) into `out`, which must hold
// at least `out_len` values; the count written goes to `*written`.
//
// # Safety
// `rr` must point to `n` readable doubles and `out` to `out_len` writable
// doubles; `written` must be a valid pointer.
enum VtaStatus vta_extract_features(const double *rr,
                                    size_t n,
                                    enum VtaFeatureSet set,
                                    bool include_windowed,
                                    double *out,
                                    size_t out_len,
                                    size_t *written);

// Lomb-Scargle power (ms²) of `n` RR intervals within the band `(lo, hi]` Hz.
//
// # Safety
// `rr` must point to `n` readable doubles and `out` must be valid.
enum VtaStatus vta_band_power(const double *rr, size_t n, double lo, double hi, double *out);

// Rank-based ROC AUC of `n` scores; `labels[i]` is nonzero for positives.
//
// # Safety
// `scores` and `labels` must point to `n` readable values and `out` must be valid.
enum VtaStatus vta_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Loads a checkpoint written by `vtapred train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum VtaStatus vta_model_load(const char *path, struct VtaModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`vta_model_load`] and not be used afterwards.
void vta_model_free(struct VtaModel *model);

// Number of raw features the model expects.
//
// # Safety
// `model` must be a live handle or null (which yields 0).
size_t vta_model_feature_count(const struct VtaModel *model);

// Probability of VTA for a tachogram of `n` intervals (ms) ending at the
// prediction time. Use [`VTA_BIRTH_YEAR_UNKNOWN`] when the year is unknown.
//
// # Safety
// `model` must be a live handle, `rr` must point to `n` readable doubles
// and `out` must be valid.
enum VtaStatus vta_model_predict(const struct VtaModel *model,
                                 const double *rr,
                                 size_t n,
                                 int32_t birth_year,
                                 double *out);

// Probability of VTA for an already extracted, unscaled feature vector.
//
// # Safety
// `model` must be a live handle, `features` must point to `n` readable
// doubles and `out` must be valid.
enum VtaStatus vta_model_predict_features(const struct VtaModel *model,
                                          const double *features,
                                          size_t n,
                                          int32_t birth_year,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VTAPRED_H */
