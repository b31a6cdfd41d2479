#ifndef LRSURF_H
#define LRSURF_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LrsStatus {
  LRS_STATUS_OK = 0,
  LRS_STATUS_NULL_POINTER = 1,
  LRS_STATUS_INVALID_ARGUMENT = 2,
  LRS_STATUS_IO = 3,
  LRS_STATUS_PARSE = 4,
  LRS_STATUS_OUT_OF_DOMAIN = 5,
  LRS_STATUS_COMPUTE = 6,
  LRS_STATUS_PANIC = 7,
} LrsStatus;

/**
 * Opaque surface handle.
 */
typedef struct LrsSurface LrsSurface;

/**
 * Parameter domain `[u0, u1] x [v0, v1]`.
 */
typedef struct LrsRect {
  double u0;
  double u1;
  double v0;
  double v1;
} LrsRect;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *lrs_last_error(void);

/**
 * Read a surface from an `lrsurf` file.
 *
 * # Safety
 * `path` must be a null-terminated string and `out` a valid pointer.
 */
enum LrsStatus lrs_surface_read(const char *path, struct LrsSurface **out);

/**
 * Write a surface to an `lrsurf` file.
 *
 * # Safety
 * `surface` must be a live handle and `path` a null-terminated string.
 */
enum LrsStatus lrs_surface_write(const struct LrsSurface *surface, const char *path);

/**
 * Evaluate the surface at `(u, v)`.
 *
 * # Safety
 * `surface` must be a live handle and `out` a valid pointer.
 */
enum LrsStatus lrs_surface_evaluate(const struct LrsSurface *surface,
                                    double u,
                                    double v,
                                    double *out);

/**
 * Evaluate at `n` points. `out` receives NaN where a point lies outside
 * the domain; the call still succeeds.
 *
 * # Safety
 * `u`, `v` and `out` must each point to `n` doubles.
 */
enum LrsStatus lrs_surface_evaluate_many(const struct LrsSurface *surface,
                                         const double *u,
                                         const double *v,
                                         size_t n,
                                         double *out);

/**
 * # Safety
 * `surface` must be a live handle and `out` a valid pointer.
 */
enum LrsStatus lrs_surface_domain(const struct LrsSurface *surface, struct LrsRect *out);

/**
 * Number of B-spline coefficients, 0 for a null handle.
 *
 * # Safety
 * `surface` must be null or a live handle.
 */
size_t lrs_surface_num_coefs(const struct LrsSurface *surface);

/**
 * Fit a surface to `n` points with a named preset (`"F7"`, `"V9"`, ...).
 *
 * # Safety
 * `x`, `y` and `z` must each point to `n` doubles, `preset` must be a
 * null-terminated string and `out` a valid pointer.
 */
enum LrsStatus lrs_fit(const double *x,
                       const double *y,
                       const double *z,
                       size_t n,
                       const char *preset,
                       struct LrsSurface **out);

/**
 * Sample the surface at cell centres and write an ESRI ASCII grid.
 *
 * # Safety
 * `surface` must be a live handle and `path` a null-terminated string.
 */
enum LrsStatus lrs_export_raster(const struct LrsSurface *surface,
                                 double cellsize,
                                 const char *path);

/**
 * Release a handle. Null is ignored.
 *
 * # Safety
 * `surface` must be null or a handle not yet freed.
 */
void lrs_surface_free(struct LrsSurface *surface);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LRSURF_H */
