#ifndef DIMLIFT_H
#define DIMLIFT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes.
 */
typedef enum DlStatus {
  DL_STATUS_OK = 0,
  DL_STATUS_INVALID_INPUT = 1,
  DL_STATUS_EMBED = 2,
  DL_STATUS_NORM = 3,
  DL_STATUS_SIZE_CAP = 4,
  DL_STATUS_FIT = 5,
  DL_STATUS_TRAIN_DIVERGED = 6,
  DL_STATUS_CONFIG = 7,
  DL_STATUS_PARSE = 8,
  DL_STATUS_IO = 9,
  DL_STATUS_NULL_POINTER = 10,
  DL_STATUS_BUFFER_TOO_SMALL = 11,
  DL_STATUS_PANIC = 12,
} DlStatus;

/**
 * Input kinds for [`dl_model_predict`].
 */
typedef enum DlInputKind {
  DL_INPUT_KIND_SET = 0,
  DL_INPUT_KIND_GRAPH = 1,
  DL_INPUT_KIND_POINT_CLOUD = 2,
} DlInputKind;

/**
 * Opaque model handle.
 */
typedef struct DlModel DlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t dl_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dl_version(void);

/**
 * Creates a model from a JSON `ModelSpec` with seeded initialization.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be writable.
 */
enum DlStatus dl_model_new(const char *spec_json, uint64_t seed, struct DlModel **out);

/**
 * Creates a model from a JSON `ModelSpec` and a parameter file.
 *
 * # Safety
 * Both strings must be NUL-terminated; `out` must be writable.
 */
enum DlStatus dl_model_load(const char *spec_json, const char *params_path, struct DlModel **out);

/**
 * Writes the model's parameters to `path`.
 *
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum DlStatus dl_model_save(const struct DlModel *model, const char *path);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must be null or come from this library and not be used afterwards.
 */
void dl_model_free(struct DlModel *model);

/**
 * # Safety
 * `model` must come from this library; `out` must be writable.
 */
enum DlStatus dl_model_param_count(const struct DlModel *model, size_t *out);

/**
 * Evaluates the model. `x` is `rows x cols`; graphs also pass the
 * `rows x rows` adjacency `adj`. The prediction (`1 x out_dim` for invariant
 * models, `rows x out_dim` for graph models) is written row-major to `out`;
 * `written` receives its length. Returns `BufferTooSmall` (with `written`
 * set) when `cap` is insufficient.
 *
 * # Safety
 * Buffers must be valid for the stated lengths; `adj` may be null for
 * non-graph inputs.
 */
enum DlStatus dl_model_predict(const struct DlModel *model,
                               enum DlInputKind kind,
                               const double *x,
                               size_t rows,
                               size_t cols,
                               const double *adj,
                               double *out,
                               size_t cap,
                               size_t *written);

/**
 * Randomized compatibility check of `model` under the sequence named
 * `seq` (e.g. `"dup-set"`), on `trials` gaussian inputs per size and every
 * multiple. `pass` receives 1 or 0.
 *
 * # Safety
 * Arrays must be valid for their lengths; outputs must be writable.
 */
enum DlStatus dl_compat_check(const struct DlModel *model,
                              const char *seq,
                              const size_t *sizes,
                              size_t n_sizes,
                              const size_t *multiples,
                              size_t n_multiples,
                              size_t trials,
                              uint64_t seed,
                              double *max_relative,
                              int32_t *pass);

/**
 * 1D `W_p` between the uniform measures on `x` and `y`.
 *
 * # Safety
 * Buffers must be valid for their lengths; `out` must be writable.
 */
enum DlStatus dl_wasserstein_1d(const double *x,
                                size_t nx,
                                const double *y,
                                size_t ny,
                                double p,
                                double *out);

/**
 * `W_p` between uniform measures on the rows of `x` (`nx x d`) and `y` (`ny x d`).
 *
 * # Safety
 * Buffers must be valid for their lengths; `out` must be writable.
 */
enum DlStatus dl_wasserstein_assign(const double *x,
                                    size_t nx,
                                    const double *y,
                                    size_t ny,
                                    size_t d,
                                    double p,
                                    double *out);

/**
 * Cut-norm bracket of a symmetric `n x n` matrix with zero signal.
 * `has_exact` is 1 when `exact` was computed.
 *
 * # Safety
 * `a` must be valid for `n*n` values; outputs must be writable.
 */
enum DlStatus dl_cut_bounds(const double *a,
                            size_t n,
                            double *lower,
                            double *upper,
                            double *exact,
                            int32_t *has_exact);

/**
 * Hausdorff distance between the row sets of `x` and `y` (both `* x d`).
 *
 * # Safety
 * Buffers must be valid for their lengths; `out` must be writable.
 */
enum DlStatus dl_hausdorff(const double *x,
                           size_t nx,
                           const double *y,
                           size_t ny,
                           size_t d,
                           double *out);

/**
 * Gromov–Wasserstein third lower bound between point clouds `x` (`nx x kx`)
 * and `y` (`ny x ky`).
 *
 * # Safety
 * Buffers must be valid for their lengths; `out` must be writable.
 */
enum DlStatus dl_gw_tlb(const double *x,
                        size_t nx,
                        size_t kx,
                        const double *y,
                        size_t ny,
                        size_t ky,
                        double p,
                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIMLIFT_H */
