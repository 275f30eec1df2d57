#ifndef TWISTOP_H
#define TWISTOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Refusals (`NOT_MIXING`, `ZERO_VARIANCE`) mean the input
// violates a standing assumption rather than that something broke.
typedef enum TwStatus {
  TW_STATUS_OK = 0,
  TW_STATUS_NULL_POINTER = 1,
  TW_STATUS_INVALID_ARGUMENT = 2,
  TW_STATUS_INVALID_UTF8 = 3,
  TW_STATUS_SCHEMA_ERROR = 4,
  TW_STATUS_UNKNOWN_MAP = 5,
  TW_STATUS_INVALID_MAP = 6,
  TW_STATUS_BOUNDARY_POINT = 7,
  TW_STATUS_OUTSIDE_DOMAIN = 8,
  TW_STATUS_NO_CONVERGENCE = 9,
  TW_STATUS_NOT_MIXING = 10,
  TW_STATUS_ZERO_VARIANCE = 11,
  TW_STATUS_EPSILON_MISMATCH = 12,
  TW_STATUS_IO = 13,
  TW_STATUS_PANIC = 14,
  TW_STATUS_OTHER = 15,
} TwStatus;

// Opaque map handle.
typedef struct TwMap TwMap;

// Opaque Ulam matrix handle.
typedef struct TwMatrix TwMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string.
// The pointer stays valid until the next call on the same thread.
const char *tw_last_error(void);

// Built-in map by name (`doubling`, `beta-2.5`, `triple-2d`, `identity`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum TwStatus tw_map_builtin(const char *name, struct TwMap **out);

// Map from the JSON `map` value of a job config: a built-in name as a
// JSON string, or an explicit object with `phase_space` and `branches`.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum TwStatus tw_map_from_json(const char *json, double alpha, struct TwMap **out);

// # Safety
// `map` must come from this library and not be used afterwards.
void tw_map_free(struct TwMap *map);

// # Safety
// `map` and `out` must be valid pointers.
enum TwStatus tw_map_dim(const struct TwMap *map, size_t *out);

// `T(x)` for a point of dimension `tw_map_dim`; writes the image to `out`.
// Points on a branch boundary give `TW_STATUS_BOUNDARY_POINT`.
//
// # Safety
// `x` and `out` must each hold `tw_map_dim` doubles.
enum TwStatus tw_map_evaluate(const struct TwMap *map, const double *x, double *out);

// Regularity constants: expansion `s`, complexity `Y` and `η₀`.
//
// # Safety
// All pointers must be valid.
enum TwStatus tw_map_regularity(const struct TwMap *map, double *s, uint64_t *y, double *eta0_out);

// Exact Ulam matrix on a product grid with `shape[k]` cells along axis `k`.
//
// # Safety
// `shape` must hold `ndim` entries and `out` be a valid pointer.
enum TwStatus tw_ulam_build(const struct TwMap *map,
                            const size_t *shape,
                            size_t ndim,
                            struct TwMatrix **out);

// # Safety
// `m` must come from this library and not be used afterwards.
void tw_matrix_free(struct TwMatrix *m);

// Number of cells.
//
// # Safety
// `m` and `out` must be valid pointers.
enum TwStatus tw_matrix_dim(const struct TwMatrix *m, size_t *out);

// `out = K f` on cell averages.
//
// # Safety
// `f` and `out` must each hold `n` doubles.
enum TwStatus tw_matrix_apply(const struct TwMatrix *m, const double *f, size_t n, double *out);

// Invariant density as cell averages with unit mass; `lambda` receives
// the leading eigenvalue.
//
// # Safety
// `out` must hold `n` doubles and `lambda` be a valid pointer.
enum TwStatus tw_invariant_density(const struct TwMatrix *m, double *out, size_t n, double *lambda);

// Leading eigenvalue `λ(θ)` of the matrix twisted by the cell observable `phi`.
//
// # Safety
// `phi` must hold `n` doubles and `out` be a valid pointer.
enum TwStatus tw_lambda(const struct TwMatrix *m,
                        const double *phi,
                        size_t n,
                        double theta,
                        double *out);

// Green–Kubo variance of the cell observable `phi`, centered first.
//
// # Safety
// `phi` must hold `n` doubles and `sigma2` be a valid pointer.
enum TwStatus tw_green_kubo(const struct TwMatrix *m, const double *phi, size_t n, double *sigma2);

// Rate function value `c(ε)` of the centered cell observable, with the
// default θ grid. `eps` must lie strictly inside `(ε₋, ε₊)`.
//
// # Safety
// `phi` must hold `n` doubles and `c` be a valid pointer.
enum TwStatus tw_rate(const struct TwMatrix *m, const double *phi, size_t n, double eps, double *c);

// Runs every pipeline stage for a JSON job config, writing artifacts to
// `out_dir`. `exit` receives the command-line exit code (0, 1 or 2); the
// returned status describes the failure, if any.
//
// # Safety
// `json` and `out_dir` must be NUL-terminated strings and `exit` valid.
enum TwStatus tw_run_config(const char *json, const char *out_dir, int *exit);

// Version string of the library.
const char *tw_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWISTOP_H */
