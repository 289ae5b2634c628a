#ifndef NPMERGE_H
#define NPMERGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every call.
 */
typedef enum NpmkStatus {
  NPMK_STATUS_OK = 0,
  NPMK_STATUS_NULL_POINTER = 1,
  NPMK_STATUS_INVALID_INPUT = 2,
  NPMK_STATUS_DIMENSION = 3,
  NPMK_STATUS_FORMAT = 4,
  NPMK_STATUS_NUMERIC = 5,
  NPMK_STATUS_IO = 6,
  NPMK_STATUS_STATE = 7,
  NPMK_STATUS_PANIC = 8,
} NpmkStatus;

/*
 Labeled examples.
 */
typedef struct NpmkDataset NpmkDataset;

/*
 Trained network parameters.
 */
typedef struct NpmkModel NpmkModel;

/*
 One neuron permutation per hidden layer.
 */
typedef struct NpmkPermutations NpmkPermutations;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *npmk_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *npmk_version(void);

/*
 Reads a model checkpoint.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum NpmkStatus npmk_model_load(const char *path_, struct NpmkModel **out);

/*
 Writes a model checkpoint with the given seed in its provenance.

 # Safety
 `model` must come from this library; `path` must be NUL-terminated.
 */
enum NpmkStatus npmk_model_save(const struct NpmkModel *model, const char *path_, uint64_t seed);

/*
 Number of trainable scalars.

 # Safety
 `model` must come from this library; `out` must be writable.
 */
enum NpmkStatus npmk_model_num_parameters(const struct NpmkModel *model, size_t *out);

/*
 Releases a model. Null is ignored.

 # Safety
 `model` must come from this library and not be used afterwards.
 */
void npmk_model_free(struct NpmkModel *model);

/*
 Loads an IDX image/label pair; `normalize` standardises integer pixels.

 # Safety
 Paths must be NUL-terminated strings; `out` must be writable.
 */
enum NpmkStatus npmk_dataset_load_idx(const char *images,
                                      const char *labels,
                                      bool normalize,
                                      struct NpmkDataset **out);

/*
 Seeded Gaussian blobs, one per class.

 # Safety
 `out` must be writable.
 */
enum NpmkStatus npmk_dataset_synth_blobs(size_t classes,
                                         size_t per_class,
                                         size_t dims,
                                         double spread,
                                         uint64_t seed,
                                         struct NpmkDataset **out);

/*
 Number of examples.

 # Safety
 `data` must come from this library; `out` must be writable.
 */
enum NpmkStatus npmk_dataset_len(const struct NpmkDataset *data, size_t *out);

/*
 Releases a dataset. Null is ignored.

 # Safety
 `data` must come from this library and not be used afterwards.
 */
void npmk_dataset_free(struct NpmkDataset *data);

/*
 Trains an MLP with layer widths `widths[0..n_widths]` using Adam.

 # Safety
 `widths` must point to `n_widths` values; `data` must come from this
 library; `out` must be writable.
 */
enum NpmkStatus npmk_train(const size_t *widths,
                           size_t n_widths,
                           bool batchnorm,
                           const struct NpmkDataset *data,
                           size_t epochs,
                           double learning_rate,
                           size_t batch_size,
                           uint64_t seed,
                           struct NpmkModel **out);

/*
 Accuracy and mean cross-entropy on `data`.

 # Safety
 Handles must come from this library; outputs must be writable.
 */
enum NpmkStatus npmk_evaluate(const struct NpmkModel *model,
                              const struct NpmkDataset *data,
                              double *accuracy,
                              double *loss);

/*
 Permutations aligning `b` onto `a` by activation correlation on `probe`.

 # Safety
 Handles must come from this library; `out` must be writable.
 */
enum NpmkStatus npmk_align_permute(const struct NpmkModel *a,
                                   const struct NpmkModel *b,
                                   const struct NpmkDataset *probe,
                                   struct NpmkPermutations **out);

/*
 Permutations aligning `b` onto `a` by weight matching.

 # Safety
 Handles must come from this library; `out` must be writable.
 */
enum NpmkStatus npmk_align_weight_matching(const struct NpmkModel *a,
                                           const struct NpmkModel *b,
                                           uint64_t seed,
                                           struct NpmkPermutations **out);

/*
 Applies hidden-layer permutations; the result computes the same function.

 # Safety
 Handles must come from this library; `out` must be writable.
 */
enum NpmkStatus npmk_apply_alignment(const struct NpmkModel *model,
                                     const struct NpmkPermutations *perms,
                                     struct NpmkModel **out);

/*
 Releases a permutation set. Null is ignored.

 # Safety
 `perms` must come from this library and not be used afterwards.
 */
void npmk_permutations_free(struct NpmkPermutations *perms);

/*
 `alpha · a + (1 − alpha) · b` for every trainable tensor.

 # Safety
 Handles must come from this library; `out` must be writable.
 */
enum NpmkStatus npmk_uniform_merge(const struct NpmkModel *a,
                                   const struct NpmkModel *b,
                                   double alpha,
                                   struct NpmkModel **out);

/*
 Learns per-parameter coefficients between `a` and an already aligned
 `b` on `opt_data` (Adam, coefficients start at 0.5), then recomputes
 BatchNorm statistics. `mean_alpha` may be null.

 # Safety
 Handles must come from this library; `out` must be writable.
 */
enum NpmkStatus npmk_np_merge(const struct NpmkModel *a,
                              const struct NpmkModel *b,
                              const struct NpmkDataset *opt_data,
                              double learning_rate,
                              size_t epochs,
                              size_t batch_size,
                              uint64_t seed,
                              struct NpmkModel **out,
                              double *mean_alpha);

/*
 Recomputes BatchNorm running statistics on `data`.

 # Safety
 Handles must come from this library; `out` must be writable.
 */
enum NpmkStatus npmk_bn_reset(const struct NpmkModel *model,
                              const struct NpmkDataset *data,
                              size_t batch_size,
                              struct NpmkModel **out);

/*
 Solves the linear assignment problem on a row-major `n × n` matrix.
 Row `i` is assigned column `mapping[i]`; `value` receives the total.

 # Safety
 `cost` must hold `n * n` values and `mapping` room for `n`.
 */
enum NpmkStatus npmk_lap_solve(const double *cost,
                               size_t n,
                               bool maximize,
                               size_t *mapping,
                               double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NPMERGE_H */
