#ifndef HGMM_H
#define HGMM_H

#pragma once

#include <stddef.h>
#include <stdint.h>

typedef enum HgmmStatus {
  HGMM_STATUS_OK = 0,
  HGMM_STATUS_NULL_POINTER = 1,
  HGMM_STATUS_INVALID_ARGUMENT = 2,
  HGMM_STATUS_CONFIG = 3,
  HGMM_STATUS_DATA = 4,
  HGMM_STATUS_NUMERICAL = 5,
  HGMM_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary; the handle involved should
   * not be used again.
   */
  HGMM_STATUS_PANIC = 7,
} HgmmStatus;

/**
 * Cells of several samples sharing one set of markers.
 */
typedef struct HgmmDataset HgmmDataset;

typedef struct HgmmMerge HgmmMerge;

typedef struct HgmmPrior HgmmPrior;

/**
 * Posterior draws with the prior and settings that produced them.
 */
typedef struct HgmmTrace HgmmTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next `hgmm_*` call on the same thread.
 */
const char *hgmm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hgmm_version(void);

/**
 * Build a dataset from `num_samples` row-major blocks stored back to back
 * in `values`; block `j` has `sizes[j]` rows of `dim` values.
 *
 * # Safety
 * `sizes` must hold `num_samples` entries and `values` the sum of
 * `sizes[j] * dim` doubles. `out` must be writable.
 */
enum HgmmStatus hgmm_dataset_new(size_t num_samples,
                                 const size_t *sizes,
                                 size_t dim,
                                 const double *values,
                                 struct HgmmDataset **out);

/**
 * Load CSV sample files sharing one header.
 *
 * # Safety
 * `paths` must hold `count` NUL-terminated strings.
 */
enum HgmmStatus hgmm_dataset_load(const char *const *paths, size_t count, struct HgmmDataset **out);

/**
 * New dataset with every marker mapped so that its pooled 1% and 99%
 * percentiles become 0 and 1.
 *
 * # Safety
 * `data` must be a live dataset handle.
 */
enum HgmmStatus hgmm_dataset_scaled(const struct HgmmDataset *data, struct HgmmDataset **out);

/**
 * # Safety
 * `data` must be a live dataset handle; `num_samples` and `dim` writable.
 */
enum HgmmStatus hgmm_dataset_shape(const struct HgmmDataset *data,
                                   size_t *num_samples,
                                   size_t *dim);

/**
 * # Safety
 * `data` must be null or a handle not yet freed.
 */
void hgmm_dataset_free(struct HgmmDataset *data);

/**
 * `k` vague clusters for data scaled to the unit box.
 *
 * # Safety
 * `data` must be a live dataset handle.
 */
enum HgmmStatus hgmm_prior_vague(const struct HgmmDataset *data, size_t k, struct HgmmPrior **out);

/**
 * Prior from its JSON encoding (as written by `hgmm simulate`).
 *
 * # Safety
 * `json` must be a NUL-terminated string.
 */
enum HgmmStatus hgmm_prior_from_json(const char *json, struct HgmmPrior **out);

/**
 * # Safety
 * `prior` must be a live prior handle.
 */
enum HgmmStatus hgmm_prior_num_clusters(const struct HgmmPrior *prior, size_t *out);

/**
 * # Safety
 * `prior` must be null or a handle not yet freed.
 */
void hgmm_prior_free(struct HgmmPrior *prior);

/**
 * Run the sampler. `workers = 0` uses every core; the result does not
 * depend on the worker count.
 *
 * # Safety
 * `data` and `prior` must be live handles.
 */
enum HgmmStatus hgmm_fit(const struct HgmmDataset *data,
                         const struct HgmmPrior *prior,
                         size_t burn_in,
                         size_t production,
                         size_t thin,
                         uint64_t seed,
                         size_t workers,
                         struct HgmmTrace **out);

/**
 * Read a trace directory written by `hgmm fit` or [`hgmm_trace_write`].
 *
 * # Safety
 * `dir` must be a NUL-terminated path.
 */
enum HgmmStatus hgmm_trace_read(const char *dir, struct HgmmTrace **out);

/**
 * # Safety
 * `trace` must be a live handle and `dir` a NUL-terminated path.
 */
enum HgmmStatus hgmm_trace_write(const struct HgmmTrace *trace, const char *dir);

/**
 * # Safety
 * `trace` must be a live handle.
 */
enum HgmmStatus hgmm_trace_num_draws(const struct HgmmTrace *trace, size_t *out);

/**
 * Posterior probability that cluster `k` (1-based) is present in sample
 * `j` (0-based).
 *
 * # Safety
 * `trace` must be a live handle.
 */
enum HgmmStatus hgmm_trace_activation_probability(const struct HgmmTrace *trace,
                                                  size_t j,
                                                  size_t k,
                                                  double *out);

/**
 * # Safety
 * `trace` must be null or a handle not yet freed.
 */
void hgmm_trace_free(struct HgmmTrace *trace);

/**
 * Merge the clusters of `trace` with default settings apart from the two
 * distance thresholds and the bootstrap size and seed of the dip test.
 *
 * # Safety
 * `trace` and `data` must be live handles; `data` must be the fitted data.
 */
enum HgmmStatus hgmm_merge(const struct HgmmTrace *trace,
                           const struct HgmmDataset *data,
                           double d1,
                           double d2,
                           size_t dip_bootstrap,
                           uint64_t dip_seed,
                           struct HgmmMerge **out);

/**
 * # Safety
 * `merge` must be a live handle.
 */
enum HgmmStatus hgmm_merge_num_populations(const struct HgmmMerge *merge, size_t *out);

/**
 * Copy the 1-based population of each cluster into `partition`, which
 * must have room for exactly `len` = K entries.
 *
 * # Safety
 * `merge` must be a live handle and `partition` hold `len` entries.
 */
enum HgmmStatus hgmm_merge_partition(const struct HgmmMerge *merge, size_t *partition, size_t len);

/**
 * # Safety
 * `merge` must be null or a handle not yet freed.
 */
void hgmm_merge_free(struct HgmmMerge *merge);

/**
 * Bhattacharyya distance between two Gaussians in `dim` dimensions.
 *
 * # Safety
 * Means hold `dim` doubles, covariances `dim * dim`.
 */
enum HgmmStatus hgmm_bhattacharyya(size_t dim,
                                   const double *mean1,
                                   const double *cov1,
                                   const double *mean2,
                                   const double *cov2,
                                   double *out);

/**
 * Dip statistic of `n` values, with optional non-negative weights (null
 * for equal weights).
 *
 * # Safety
 * `xs` holds `n` doubles; `ws` is null or holds `n` doubles.
 */
enum HgmmStatus hgmm_dip(const double *xs, const double *ws, size_t n, double *out);

/**
 * Dip test of unimodality against `bootstrap` uniform samples of size `n`.
 *
 * # Safety
 * `xs` holds `n` doubles; `dip` and `p_value` are writable.
 */
enum HgmmStatus hgmm_dip_test(const double *xs,
                              size_t n,
                              size_t bootstrap,
                              uint64_t seed,
                              double *dip,
                              double *p_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HGMM_H */
