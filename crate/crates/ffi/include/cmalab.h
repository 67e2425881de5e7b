#ifndef CMALAB_H
#define CMALAB_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum CmaStatus {
  CMA_STATUS_OK = 0,
  CMA_STATUS_NULL_POINTER = 1,
  CMA_STATUS_INVALID_ARGUMENT = 2,
  CMA_STATUS_REJECTED = 3,
  CMA_STATUS_NOT_CONVERGED = 4,
  CMA_STATUS_IO = 5,
  CMA_STATUS_PANIC = 6,
} CmaStatus;

/**
 * Opaque scalar field handle.
 */
typedef struct CmaField CmaField;

/**
 * Opaque grid handle.
 */
typedef struct CmaGrid CmaGrid;

/**
 * Summary of a solve.
 */
typedef struct CmaSolveInfo {
  bool converged;
  /**
   * Newton iterations over all stages
   */
  size_t iterations;
  /**
   * final sup-norm of the log residual
   */
  double residual;
  /**
   * constant c with which ψ was replaced by cψ, NaN when not applicable
   */
  double rescale;
  /**
   * whether every post-solve check passed
   */
  bool checks_passed;
} CmaSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cma_version(void);

/**
 * Copies the message of the last failure on this thread into `buf`
 * (truncated and NUL-terminated when `cap > 0`). Returns the length the
 * full message needs including the NUL, or 0 when there is none.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t cma_last_error(char *buf, size_t cap);

/**
 * Flat torus of complex dimension `n` with period `period` and `res`
 * points per real axis.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum CmaStatus cma_grid_torus(size_t n, double period, size_t res, struct CmaGrid **out);

/**
 * Box [lo, hi]^{2n} with `res` intervals per real axis.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum CmaStatus cma_grid_box(size_t n, double lo, double hi, size_t res, struct CmaGrid **out);

/**
 * Number of grid points, 0 for a null handle.
 *
 * # Safety
 * `grid` must be null or a live grid handle.
 */
size_t cma_grid_len(const struct CmaGrid *grid);

/**
 * Complex dimension n, 0 for a null handle.
 *
 * # Safety
 * `grid` must be null or a live grid handle.
 */
size_t cma_grid_dim(const struct CmaGrid *grid);

/**
 * Writes the 2n real coordinates (x₁, y₁, x₂, ...) of point `idx` to `out`.
 *
 * # Safety
 * `grid` must be a live grid handle and `out` must point to `cap` writable values.
 */
enum CmaStatus cma_grid_coords(const struct CmaGrid *grid, size_t idx, double *out, size_t cap);

/**
 * # Safety
 * `grid` must be null or a handle from this library not freed before.
 */
void cma_grid_free(struct CmaGrid *grid);

/**
 * Field on `grid` with `len` values in grid order (last axis fastest).
 *
 * # Safety
 * `grid` must be a live grid handle, `values` must point to `len` values
 * and `out` must be a valid pointer to a handle slot.
 */
enum CmaStatus cma_field_new(const struct CmaGrid *grid,
                             const double *values,
                             size_t len,
                             struct CmaField **out);

/**
 * Number of values, 0 for a null handle.
 *
 * # Safety
 * `field` must be null or a live field handle.
 */
size_t cma_field_len(const struct CmaField *field);

/**
 * Copies the values into `out`, which must have room for all of them.
 *
 * # Safety
 * `field` must be a live field handle and `out` must point to `cap` writable values.
 */
enum CmaStatus cma_field_values(const struct CmaField *field, double *out, size_t cap);

/**
 * New handle to the grid of `field`.
 *
 * # Safety
 * `field` must be a live field handle and `out` a valid pointer to a handle slot.
 */
enum CmaStatus cma_field_grid(const struct CmaField *field, struct CmaGrid **out);

/**
 * # Safety
 * `field` must be null or a handle from this library not freed before.
 */
void cma_field_free(struct CmaField *field);

/**
 * Writes `field` in the CMAF binary format.
 *
 * # Safety
 * `field` must be a live field handle and `file` a NUL-terminated path.
 */
enum CmaStatus cma_field_write(const struct CmaField *field, const char *file);

/**
 * Reads a CMAF binary file.
 *
 * # Safety
 * `file` must be a NUL-terminated path and `out` a valid pointer to a handle slot.
 */
enum CmaStatus cma_field_read(const char *file, struct CmaField **out);

/**
 * Solves det(ω + ∂∂̄u) = c ψ ωⁿ with ∫u ωⁿ = 0 on a torus grid, ω flat,
 * for u-independent samples `psi ≥ 0`. On `CMA_STATUS_NOT_CONVERGED` the
 * last iterate is still returned in `out`.
 *
 * # Safety
 * `grid` must be a live torus grid handle, `psi` must point to `len`
 * values, `out` must be a valid handle slot and `out_info` null or writable.
 */
enum CmaStatus cma_solve_torus(const struct CmaGrid *grid,
                               const double *psi,
                               size_t len,
                               struct CmaField **out,
                               struct CmaSolveInfo *out_info);

/**
 * Solves det(ω + ∂∂̄u) = ψ ωⁿ on a box grid with u = `boundary` on the
 * boundary, started from the strict subsolution `subsolution`, ω flat.
 * On `CMA_STATUS_NOT_CONVERGED` the last iterate is still returned.
 *
 * # Safety
 * `boundary` and `subsolution` must be live field handles on the same box
 * grid, `psi` must point to `len` values, `out` must be a valid handle
 * slot and `out_info` null or writable.
 */
enum CmaStatus cma_solve_dirichlet(const struct CmaField *boundary,
                                   const struct CmaField *subsolution,
                                   const double *psi,
                                   size_t len,
                                   struct CmaField **out,
                                   struct CmaSolveInfo *out_info);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMALAB_H */
