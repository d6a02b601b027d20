#ifndef ESSSPEC_H
#define ESSSPEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EssAlphaRoute {
  ESS_ALPHA_ROUTE_DERIVATIVE = 0,
  ESS_ALPHA_ROUTE_SMATRIX = 1,
} EssAlphaRoute;

typedef enum EssStatus {
  ESS_STATUS_OK = 0,
  ESS_STATUS_NULL_POINTER = 1,
  ESS_STATUS_INVALID_ARGUMENT = 2,
  ESS_STATUS_INVALID_MODEL = 3,
  ESS_STATUS_BAND_EDGE = 4,
  ESS_STATUS_RESONANCE = 5,
  ESS_STATUS_NUMERICAL_FAILURE = 6,
  ESS_STATUS_IDENTITY_VIOLATED = 7,
  ESS_STATUS_PANIC = 99,
} EssStatus;

// Opaque model handle.
typedef struct EssModel EssModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *ess_version(void);

// Message of the last failed call on this thread; valid until the next
// failing call on the same thread. Empty if there was none.
const char *ess_last_error_message(void);

// Builds a model from its JSON description. On success `*out` owns a handle.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum EssStatus ess_model_from_json(const char *json, struct EssModel **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must come from [`ess_model_from_json`] and not be used afterwards.
void ess_model_free(struct EssModel *model);

// Dimension `2N + 1` of the truncated space.
//
// # Safety
// Pointers must be valid.
enum EssStatus ess_model_dim(const struct EssModel *model, size_t *out);

// `alpha(lambda)` by the chosen route.
//
// # Safety
// Pointers must be valid.
enum EssStatus ess_alpha(const struct EssModel *model,
                         double lambda,
                         enum EssAlphaRoute route,
                         double *out);

// Smallest singular values of `I + A0 J` and `I - A J`, and whether the
// projection pair is Fredholm at `lambda` (`*fredholm` is 0 or 1).
//
// # Safety
// Pointers must be valid.
enum EssStatus ess_fredholm(const struct EssModel *model,
                            double lambda,
                            double kernel_tol,
                            double *sigma_min_0,
                            double *sigma_min_1,
                            int32_t *fredholm);

// Transfer-matrix scattering matrix of the model's potential, written to
// `out[8]` row-major as `re, im` pairs.
//
// # Safety
// `out` must point to 8 writable doubles.
enum EssStatus ess_smatrix(const struct EssModel *model, double lambda, double *out);

// Largest eigenvalue of the `n`-node discretization of `Gamma` on `(0, T)`.
//
// # Safety
// `out` must be valid.
enum EssStatus ess_gamma_max_eigenvalue(size_t n, double cutoff, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ESSSPEC_H */
