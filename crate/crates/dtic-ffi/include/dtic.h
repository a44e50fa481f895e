#ifndef DTIC_H
#define DTIC_H

/* Generated by cbindgen from the dtic-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum DticStatus {
  /**
   * Success.
   */
  DTIC_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DTIC_NULL_ARGUMENT = 1,
  /**
   * The input was rejected (bad path, malformed model, invalid series,
   * ineligible encounter, model without centroids).
   */
  DTIC_INVALID_INPUT = 2,
  /**
   * The computation produced a non-finite value.
   */
  DTIC_NUMERIC = 3,
  /**
   * A panic was caught at the boundary; this is a bug, not bad input.
   */
  DTIC_INTERNAL = 4,
} DticStatus;

/**
 * Loaded model plus the live parameter store it deserializes into.
 */
typedef struct DticModel DticModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the last error message for this thread, or null if none has been
 * recorded. The pointer stays valid until the next failing call on the same
 * thread; do not free it.
 */
const char *dtic_last_error(void);

/**
 * Returns the library version as a static NUL-terminated string.
 */
const char *dtic_version(void);

/**
 * Loads a model JSON file.
 *
 * On success writes a handle to `out` and returns `DticOk`; the handle must
 * be released with [`dtic_model_free`].
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to a writable
 * pointer slot; both must be non-null.
 */
enum DticStatus dtic_model_load(const char *path, struct DticModel **out);

/**
 * Releases a handle returned by [`dtic_model_load`]. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a pointer obtained from [`dtic_model_load`] that
 * has not been freed already.
 */
void dtic_model_free(struct DticModel *model);

/**
 * Number of phenotypes the model assigns to, or 0 if the model has not been
 * clustered.
 *
 * # Safety
 * `model` must be a live handle from [`dtic_model_load`].
 */
size_t dtic_model_num_phenotypes(const struct DticModel *model);

/**
 * Width of the learned embedding space.
 *
 * # Safety
 * `model` must be a live handle from [`dtic_model_load`].
 */
size_t dtic_model_embedding_dim(const struct DticModel *model);

/**
 * Assigns one encounter to its nearest phenotype centroid.
 *
 * `times` and `values` hold the observations of all six variables
 * concatenated in canonical order (SBP, DBP, HR, TEMP, SPO2, RR); `lens`
 * gives the six per-variable observation counts. Times are minutes from
 * window start in `[0, 420)` and must be strictly increasing within each
 * variable; values are native units. The encounter is cleaned, imputed, and
 * scaled exactly as held-out data in the CLI. On success writes the
 * phenotype index and the embedding-space distance to its centroid.
 *
 * # Safety
 * `model` must be a live handle; `times` and `values` must hold
 * `lens[0] + .. + lens[5]` readable elements; `lens` must hold 6 readable
 * elements; `phenotype` and `distance` must be writable and non-null.
 */
enum DticStatus dtic_assign(const struct DticModel *model,
                            const double *times,
                            const double *values,
                            const size_t *lens,
                            uint32_t *phenotype,
                            double *distance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DTIC_H */
