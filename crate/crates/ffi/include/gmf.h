#ifndef GMF_H
#define GMF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GmfStatus {
  GMF_STATUS_OK = 0,
  GMF_STATUS_NULL_POINTER = -1,
  GMF_STATUS_DOMAIN = -2,
  GMF_STATUS_CAPACITY = -3,
  GMF_STATUS_STATE = -4,
  GMF_STATUS_NUMERICAL = -5,
  GMF_STATUS_PARSE = -6,
  GMF_STATUS_IO = -7,
  GMF_STATUS_PANIC = -8,
} GmfStatus;

/**
 * Opaque model handle.
 */
typedef struct GmfModel GmfModel;

/**
 * Opaque run report handle.
 */
typedef struct GmfReport GmfReport;

/**
 * Inference settings; start from [`gmf_options_default`].
 */
typedef struct GmfOptions {
  uint64_t seed;
  double tolerance;
  /**
   * GMF sweep limit; also the BP iteration limit.
   */
  size_t max_sweeps;
  size_t restarts;
  size_t cap;
  /**
   * BP damping in [0, 1).
   */
  double damping;
  /**
   * Nonzero for random initialization, zero for uniform.
   */
  int32_t random_init;
} GmfOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default options: seed 0, tolerance 1e-6, 1000 sweeps, 1 restart,
 * default cap, no damping, random initialization.
 */
struct GmfOptions gmf_options_default(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on this thread.
 */
const char *gmf_last_error_message(void);

/**
 * Parse a model from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum GmfStatus gmf_model_load_json(const char *json, struct GmfModel **out);

/**
 * Read a model JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GmfStatus gmf_model_load_file(const char *path, struct GmfModel **out);

/**
 * Release a model; NULL is ignored.
 *
 * # Safety
 * `model` must come from a `gmf_model_load_*` call and not be freed twice.
 */
void gmf_model_free(struct GmfModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum GmfStatus gmf_model_num_variables(const struct GmfModel *model, size_t *out);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum GmfStatus gmf_model_cardinality(const struct GmfModel *model, size_t var, size_t *out);

/**
 * Observe `var` in `state`, replacing any previous observation.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum GmfStatus gmf_model_set_evidence(struct GmfModel *model, size_t var, size_t state);

/**
 * Remove all observations.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum GmfStatus gmf_model_clear_evidence(struct GmfModel *model);

/**
 * Exact marginals and log-partition. `opts` may be NULL.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum GmfStatus gmf_run_exact(const struct GmfModel *model,
                             const struct GmfOptions *opts,
                             struct GmfReport **out);

/**
 * Generalized mean field. `partition` is a scheme name such as
 * `"blocks:2x2"` (square grids), `"single"`, `"singletons"`, `"mincut:k=4"`,
 * or partition JSON text `{"clusters": [[...], ...]}`. `opts` may be NULL.
 *
 * # Safety
 * `model` must be a live handle, `partition` a NUL-terminated string and
 * `out` writable.
 */
enum GmfStatus gmf_run_gmf(const struct GmfModel *model,
                           const char *partition,
                           const struct GmfOptions *opts,
                           struct GmfReport **out);

/**
 * Naive mean field. `opts` may be NULL.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum GmfStatus gmf_run_mf(const struct GmfModel *model,
                          const struct GmfOptions *opts,
                          struct GmfReport **out);

/**
 * Loopy belief propagation. `opts` may be NULL.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum GmfStatus gmf_run_bp(const struct GmfModel *model,
                          const struct GmfOptions *opts,
                          struct GmfReport **out);

/**
 * Release a report; NULL is ignored.
 *
 * # Safety
 * `report` must come from a `gmf_run_*` call and not be freed twice.
 */
void gmf_report_free(struct GmfReport *report);

/**
 * Copy the marginal of `var` into `buf` (capacity `len`) and store its
 * cardinality in `written`. Observed variables have no marginal
 * (`GMF_STATUS_DOMAIN`); a short buffer gives `GMF_STATUS_CAPACITY` with
 * `written` set to the required length.
 *
 * # Safety
 * `report` must be a live handle, `buf` valid for `len` doubles, `written` writable.
 */
enum GmfStatus gmf_report_marginal(const struct GmfReport *report,
                                   size_t var,
                                   double *buf,
                                   size_t len,
                                   size_t *written);

/**
 * ELBO of a GMF or MF report; `GMF_STATUS_STATE` for other algorithms.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum GmfStatus gmf_report_elbo(const struct GmfReport *report, double *out);

/**
 * Log-partition of an exact report; `GMF_STATUS_STATE` otherwise.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum GmfStatus gmf_report_log_partition(const struct GmfReport *report, double *out);

/**
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum GmfStatus gmf_report_converged(const struct GmfReport *report, int32_t *out);

/**
 * GMF sweeps, or BP iterations needed to converge.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum GmfStatus gmf_report_sweeps(const struct GmfReport *report, size_t *out);

/**
 * Serialize the report as JSON; release the string with [`gmf_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum GmfStatus gmf_report_to_json(const struct GmfReport *report, char **out);

/**
 * Release a string returned by this library; NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void gmf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GMF_H */
