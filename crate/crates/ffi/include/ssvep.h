#ifndef SSVEP_H
#define SSVEP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Montage codes used by [`ssvep_model_montage`].
 */
#define SSVEP_MONTAGE_SCALP 0

#define SSVEP_MONTAGE_EAR 1

/**
 * Result of every fallible call.
 */
typedef enum {
  SSVEP_STATUS_OK = 0,
  SSVEP_STATUS_NULL_POINTER = 1,
  SSVEP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed model file.
   */
  SSVEP_STATUS_FORMAT = 3,
  SSVEP_STATUS_IO = 4,
  /**
   * Numerical or internal failure.
   */
  SSVEP_STATUS_RUNTIME = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  SSVEP_STATUS_PANIC = 6,
} SsvepStatus;

/**
 * CCA reference bank for fixed frequencies, epoch length and rate.
 */
typedef struct SsvepCca SsvepCca;

/**
 * A trained LDA or network model.
 */
typedef struct SsvepModel SsvepModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *ssvep_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ssvep_version(void);

/**
 * Loads a model file written by `ssvep train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
SsvepStatus ssvep_model_load(const char *path, SsvepModel **out);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from [`ssvep_model_load`] and not be used afterwards.
 */
void ssvep_model_free(SsvepModel *model);

/**
 * Montage the model was trained on ([`SSVEP_MONTAGE_SCALP`] or
 * [`SSVEP_MONTAGE_EAR`]) and its channel count.
 *
 * # Safety
 * `model` must be a live handle; `montage` and `channels` valid pointers.
 */
SsvepStatus ssvep_model_montage(const SsvepModel *model, int32_t *montage, size_t *channels);

/**
 * Classifies one raw epoch. The 3 Hz high-pass used in training is applied
 * here, so pass unfiltered data.
 *
 * # Safety
 * `model` must be a live handle, `data` must hold `channels * samples`
 * values and `label` must be a valid pointer.
 */
SsvepStatus ssvep_model_predict(const SsvepModel *model,
                                const double *data,
                                size_t channels,
                                size_t samples,
                                double rate,
                                size_t *label);

/**
 * Builds CCA references for `n_freqs` stimulus frequencies with
 * `harmonics` sine/cosine pairs each.
 *
 * # Safety
 * `freqs` must hold `n_freqs` values and `out` must be a valid pointer.
 */
SsvepStatus ssvep_cca_new(const double *freqs,
                          size_t n_freqs,
                          size_t harmonics,
                          size_t samples,
                          double rate,
                          SsvepCca **out);

/**
 * Releases a CCA handle. NULL is ignored.
 *
 * # Safety
 * `cca` must come from [`ssvep_cca_new`] and not be used afterwards.
 */
void ssvep_cca_free(SsvepCca *cca);

/**
 * Picks the frequency with the largest canonical correlation. If
 * `correlations` is not NULL it receives one value per frequency.
 *
 * # Safety
 * `cca` must be a live handle, `data` must hold `channels * samples`
 * values, `label` must be valid and `correlations` NULL or room for
 * `n_freqs` values.
 */
SsvepStatus ssvep_cca_classify(const SsvepCca *cca,
                               const double *data,
                               size_t channels,
                               size_t samples,
                               size_t *label,
                               double *correlations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSVEP_H */
