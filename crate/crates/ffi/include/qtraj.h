#ifndef QTRAJ_H
#define QTRAJ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum QtrajStatus {
  QTRAJ_STATUS_OK = 0,
  QTRAJ_STATUS_NULL_POINTER = 1,
  QTRAJ_STATUS_INVALID_ARGUMENT = 2,
  QTRAJ_STATUS_DIMENSION_MISMATCH = 3,
  QTRAJ_STATUS_NUMERICAL = 4,
  QTRAJ_STATUS_JSON = 5,
  QTRAJ_STATUS_BUDGET = 6,
  QTRAJ_STATUS_IO = 7,
  QTRAJ_STATUS_PANIC = 8,
} QtrajStatus;

// Opaque model handle.
typedef struct QtrajModel QtrajModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the next call.
const char *qtraj_last_error(void);

// # Safety
// `s` must come from this library, or be NULL.
void qtraj_string_free(char *s);

// Parse a model from its JSON file format.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum QtrajStatus qtraj_model_from_json(const char *json, struct QtrajModel **out);

// Build a gallery example. `params_json` may be NULL or an object with optional keys
// `gamma`, `a`, `b`, `q`, `h_diag`.
//
// # Safety
// `name` must be a NUL-terminated string, `params_json` NULL or NUL-terminated; `out` must be
// writable.
enum QtrajStatus qtraj_model_gallery(const char *name,
                                     const char *params_json,
                                     struct QtrajModel **out);

// Serialize a model to JSON.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum QtrajStatus qtraj_model_to_json(const struct QtrajModel *model, char **out);

// # Safety
// `model` must be a live handle; `out` must be writable.
enum QtrajStatus qtraj_model_dim(const struct QtrajModel *model, uintptr_t *out);

// # Safety
// `model` must come from this library, or be NULL. It must not be used afterwards.
void qtraj_model_free(struct QtrajModel *model);

// Ergodicity report as JSON.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum QtrajStatus qtraj_check_erg(const struct QtrajModel *model, char **out);

// Purification report as JSON.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum QtrajStatus qtraj_check_pur(const struct QtrajModel *model, char **out);

// `e^{tL}(ρ)`. `rho_in` and `rho_out` hold `k * k` complex entries (`2 k²` doubles) and may
// alias.
//
// # Safety
// Both buffers must hold `2 k²` doubles where `k` is the model dimension.
enum QtrajStatus qtraj_evolve_master(const struct QtrajModel *model,
                                     const double *rho_in,
                                     double t,
                                     double *rho_out);

// Fubini–Study distance between the rays of two nonzero vectors in `ℂ^k`.
//
// # Safety
// `x` and `y` must each hold `2k` doubles; `out` must be writable.
enum QtrajStatus qtraj_fs_distance(const double *x, const double *y, uintptr_t k, double *out);

// Exact W₁ under the Fubini–Study distance between `Σ wa_i δ_{a_i}` and `Σ wb_j δ_{b_j}`.
// Atoms are `n` (resp. `m`) consecutive vectors of `k` complex entries. A NULL weight pointer
// means uniform weights.
//
// # Safety
// `a` holds `2nk` doubles, `b` holds `2mk`, `wa`/`wb` hold `n`/`m` doubles or are NULL.
enum QtrajStatus qtraj_wasserstein1(const double *a,
                                    const double *wa,
                                    uintptr_t n,
                                    const double *b,
                                    const double *wb,
                                    uintptr_t m,
                                    uintptr_t k,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QTRAJ_H */
