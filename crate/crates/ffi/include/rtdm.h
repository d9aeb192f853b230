/* Generated by cbindgen; do not edit. */

#ifndef RTDM_H
#define RTDM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RtdmStatus {
  RTDM_STATUS_OK = 0,
  RTDM_STATUS_NULL_POINTER = 1,
  RTDM_STATUS_INVALID_ARGUMENT = 2,
  RTDM_STATUS_NUMERIC = 3,
  RTDM_STATUS_IO = 4,
  RTDM_STATUS_BUFFER_TOO_SMALL = 5,
  RTDM_STATUS_PANIC = 6,
} RtdmStatus;

typedef enum RtdmModelKind {
  RTDM_MODEL_KIND_GMM = 0,
  RTDM_MODEL_KIND_LDA = 1,
} RtdmModelKind;

/**
 * Observations, one per column.
 */
typedef struct RtdmDataset RtdmDataset;

typedef struct RtdmRegularizer RtdmRegularizer;

/**
 * Output of a fit: the reported parameters, and for regularized fits the
 * unregularized baseline and optimization summary.
 */
typedef struct RtdmResult RtdmResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *rtdm_last_error(void);

/**
 * Copies `dim * n` column-major values.
 *
 * # Safety
 * `data` must point to `dim * n` readable doubles and `out` must be writable.
 */
enum RtdmStatus rtdm_dataset_new(const double *data,
                                 size_t dim,
                                 size_t n,
                                 struct RtdmDataset **out);

/**
 * Reads a headerless CSV file with one observation per row.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum RtdmStatus rtdm_dataset_load_csv(const char *path, struct RtdmDataset **out);

/**
 * # Safety
 * `x` must be null or a live dataset handle.
 */
size_t rtdm_dataset_dim(const struct RtdmDataset *x);

/**
 * # Safety
 * `x` must be null or a live dataset handle.
 */
size_t rtdm_dataset_len(const struct RtdmDataset *x);

/**
 * # Safety
 * `x` must be null or a handle from `rtdm_dataset_new` not yet freed.
 */
void rtdm_dataset_free(struct RtdmDataset *x);

/**
 * # Safety
 * `out` must be writable.
 */
enum RtdmStatus rtdm_regularizer_gaussian_prior(double sigma_m2, struct RtdmRegularizer **out);

/**
 * Distance to a `dim × k` column-major reference matrix.
 *
 * # Safety
 * `prior` must point to `dim * k` doubles and `out` must be writable.
 */
enum RtdmStatus rtdm_regularizer_transfer(const double *prior,
                                          size_t dim,
                                          size_t k,
                                          struct RtdmRegularizer **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum RtdmStatus rtdm_regularizer_anti_correlation(struct RtdmRegularizer **out);

/**
 * Tree-distance regularizer over a heading tree in the text format read by the CLI.
 *
 * # Safety
 * `tree_text` must be a NUL-terminated string and `out` writable.
 */
enum RtdmStatus rtdm_regularizer_tree(const char *tree_text, struct RtdmRegularizer **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum RtdmStatus rtdm_regularizer_sparsity(double alpha_a, struct RtdmRegularizer **out);

/**
 * # Safety
 * `r` must be null or a live regularizer handle.
 */
void rtdm_regularizer_free(struct RtdmRegularizer *r);

/**
 * Unregularized tensor decomposition. For GMM a NaN `sigma2` estimates the noise
 * variance from the data; `alpha_b` is ignored. For LDA `sigma2` is ignored.
 *
 * # Safety
 * `x` must be a live dataset handle and `out` writable.
 */
enum RtdmStatus rtdm_fit(const struct RtdmDataset *x,
                         enum RtdmModelKind model,
                         size_t k,
                         double alpha_b,
                         double sigma2,
                         struct RtdmResult **out);

/**
 * Regularized decomposition. `config_json` holds optimizer settings as a JSON
 * object (`lambda`, `n_p`, `max_iters`, `seed`, ...); null uses the defaults.
 *
 * # Safety
 * `x` and `reg` must be live handles, `config_json` null or NUL-terminated, and `out` writable.
 */
enum RtdmStatus rtdm_regularize(const struct RtdmDataset *x,
                                enum RtdmModelKind model,
                                size_t k,
                                double alpha_b,
                                double sigma2,
                                const struct RtdmRegularizer *reg,
                                const char *config_json,
                                struct RtdmResult **out);

/**
 * # Safety
 * `r` must be null or a live result handle.
 */
size_t rtdm_result_dim(const struct RtdmResult *r);

/**
 * # Safety
 * `r` must be null or a live result handle.
 */
size_t rtdm_result_k(const struct RtdmResult *r);

/**
 * Copies the `dim × k` parameters, column-major, into `out` of capacity `len`.
 *
 * # Safety
 * `r` must be a live result handle and `out` must hold `len` doubles.
 */
enum RtdmStatus rtdm_result_params(const struct RtdmResult *r, double *out, size_t len);

/**
 * Copies the unregularized parameters; equal to the parameters for plain fits.
 *
 * # Safety
 * `r` must be a live result handle and `out` must hold `len` doubles.
 */
enum RtdmStatus rtdm_result_baseline_params(const struct RtdmResult *r, double *out, size_t len);

/**
 * Copies the `k` component weights.
 *
 * # Safety
 * `r` must be a live result handle and `out` must hold `len` doubles.
 */
enum RtdmStatus rtdm_result_weights(const struct RtdmResult *r, double *out, size_t len);

/**
 * Optimizer iterations run; zero for plain fits.
 *
 * # Safety
 * `r` must be null or a live result handle.
 */
size_t rtdm_result_iterations(const struct RtdmResult *r);

/**
 * # Safety
 * `r` must be null or a live result handle.
 */
bool rtdm_result_converged(const struct RtdmResult *r);

/**
 * Unweighted regularizer value at the result; NaN for plain fits.
 *
 * # Safety
 * `r` must be null or a live result handle.
 */
double rtdm_result_reg_value(const struct RtdmResult *r);

/**
 * # Safety
 * `r` must be null or a handle from `rtdm_fit`/`rtdm_regularize` not yet freed.
 */
void rtdm_result_free(struct RtdmResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RTDM_H */
