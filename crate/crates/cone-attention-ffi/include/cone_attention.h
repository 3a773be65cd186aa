#ifndef CONE_ATTENTION_H
#define CONE_ATTENTION_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  CA_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CA_STATUS_NULL_POINTER = 1,
  /**
   * Bad argument, shape, or configuration; see `ca_last_error_message`.
   */
  CA_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Overflow or a non-finite intermediate; see `ca_last_error_message`.
   */
  CA_STATUS_NUMERIC_RANGE = 3,
  /**
   * The underlying implementation panicked (a bug, not user error).
   */
  CA_STATUS_PANIC = 4,
} CaStatus;

/**
 * Opaque kernel configuration handle.
 */
typedef struct CaConfig CaConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ca_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *ca_version(void);

/**
 * Creates a config with paper-default parameters for the named kernel
 * (`penumbral`, `umbral`, `dist_halfspace`, `dist_hyperboloid`,
 * `laplacian`, `dot`). Returns null on error; free with
 * [`ca_config_free`].
 *
 * # Safety
 * `kernel` must be a valid NUL-terminated string.
 */
CaConfig *ca_config_new(const char *kernel);

/**
 * Creates a config from the same JSON document the CLI accepts, e.g.
 * `{"kernel": "penumbral", "gamma": 1.0}`. Returns null on error.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string.
 */
CaConfig *ca_config_from_json(const char *json);

/**
 * Frees a config created by this library. Null is a no-op.
 *
 * # Safety
 * `config` must be a pointer returned by `ca_config_new` or
 * `ca_config_from_json` that has not been freed yet.
 */
void ca_config_free(CaConfig *config);

/**
 * Scalar logit of one query/key pair of `d`-dimensional Euclidean
 * inputs, projection included.
 *
 * # Safety
 * `query` and `key` must point to `d` doubles, `out` to one double, and
 * `config` must be a live handle.
 */
CaStatus ca_logit(const CaConfig *config,
                  const double *query,
                  const double *key,
                  size_t d,
                  double *out);

/**
 * Pairwise logit gradient with respect to both Euclidean inputs.
 * `nonsmooth_out` (optional) receives 1 when the pair sits on a branch
 * tie or existence boundary and the documented subgradient was returned.
 *
 * # Safety
 * `query`, `key`, `grad_query_out`, `grad_key_out` must point to `d`
 * doubles each; `config` must be a live handle.
 */
CaStatus ca_logit_grad(const CaConfig *config,
                       const double *query,
                       const double *key,
                       size_t d,
                       double *grad_query_out,
                       double *grad_key_out,
                       uint8_t *nonsmooth_out);

/**
 * Fills `out` (row-major n x m) with the pairwise logits of `queries`
 * (n x d) against `keys` (m x d). Masked pairs are not supported here;
 * use [`ca_attend`] for masking.
 *
 * # Safety
 * Buffers must have the stated sizes; `config` must be a live handle.
 */
CaStatus ca_logit_matrix(const CaConfig *config,
                         const double *queries,
                         size_t n,
                         const double *keys,
                         size_t m,
                         size_t d,
                         double *out);

/**
 * Full attention read-out into `out` (row-major n x dv). `mask` may be
 * null (attend everywhere) or point to n*m bytes where nonzero means
 * attend; every query row needs at least one attended key. Honors the
 * config's `heads` field.
 *
 * # Safety
 * Buffers must have the stated sizes; `config` must be a live handle.
 */
CaStatus ca_attend(const CaConfig *config,
                   const double *queries,
                   size_t n,
                   const double *keys,
                   size_t m,
                   size_t d,
                   const double *values,
                   size_t dv,
                   const uint8_t *mask,
                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONE_ATTENTION_H */
