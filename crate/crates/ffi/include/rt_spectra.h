#ifndef RT_SPECTRA_H
#define RT_SPECTRA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of the C interface.
 */
typedef enum RtsStatus {
  RTS_STATUS_OK = 0,
  RTS_STATUS_NULL_POINTER = 1,
  RTS_STATUS_CONFIG = 2,
  RTS_STATUS_NUMERICAL = 3,
  RTS_STATUS_DOMAIN = 4,
  RTS_STATUS_PANIC = 5,
} RtsStatus;

/**
 * Stability verdict of a dispersion scan.
 */
typedef enum RtsVerdict {
  RTS_VERDICT_STABLE = 0,
  RTS_VERDICT_UNSTABLE = 1,
  RTS_VERDICT_MARGINAL = 2,
} RtsVerdict;

/**
 * Parsed configuration with its equilibrium and vertical grid.
 */
typedef struct RtsConfig RtsConfig;

/**
 * Result of a dispersion scan.
 */
typedef struct RtsCurve RtsCurve;

/**
 * One sampled frequency. `lambda` is 0 and `unstable` is 0 for stable samples.
 */
typedef struct RtsSample {
  double xi1;
  double xi2;
  double lambda;
  int32_t unstable;
} RtsSample;

/**
 * Scalar results of a scan. Absent values are NaN, an infinite critical
 * frequency is `INFINITY`.
 */
typedef struct RtsSummary {
  double lambda_max;
  double xi1[2];
  double xi_c;
  double c7;
  double rayleigh;
  enum RtsVerdict verdict;
} RtsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a JSON run configuration and builds its equilibrium.
 *
 * # Safety
 * `json` must be a valid nul-terminated string and `out` a valid pointer.
 */
enum RtsStatus rts_config_from_json(const char *json, struct RtsConfig **out);

/**
 * Releases a configuration. Null is ignored.
 *
 * # Safety
 * `cfg` must come from [`rts_config_from_json`] and not be used afterwards.
 */
void rts_config_free(struct RtsConfig *cfg);

/**
 * Critical frequency `sqrt(g [rho] / theta)`; `INFINITY` without surface tension.
 *
 * # Safety
 * `cfg` and `out` must be valid pointers.
 */
enum RtsStatus rts_critical_frequency(const struct RtsConfig *cfg, double *out);

/**
 * Growth rate at frequency `(xi1, xi2)`. Stable frequencies give
 * `*unstable = 0` and `*lambda = 0`.
 *
 * # Safety
 * `cfg`, `lambda` and `unstable` must be valid pointers.
 */
enum RtsStatus rts_solve_lambda(const struct RtsConfig *cfg,
                                double xi1,
                                double xi2,
                                double *lambda,
                                int32_t *unstable);

/**
 * Runs the configured dispersion scan.
 *
 * # Safety
 * `cfg` and `out` must be valid pointers.
 */
enum RtsStatus rts_dispersion_new(const struct RtsConfig *cfg, struct RtsCurve **out);

/**
 * Number of samples; 0 for a null handle.
 *
 * # Safety
 * `curve` must be null or a valid handle.
 */
size_t rts_dispersion_len(const struct RtsCurve *curve);

/**
 * Sample `index` of the scan.
 *
 * # Safety
 * `curve` and `out` must be valid pointers.
 */
enum RtsStatus rts_dispersion_sample(const struct RtsCurve *curve,
                                     size_t index,
                                     struct RtsSample *out);

/**
 * Largest rate, its frequency, the growth constant and the verdict.
 *
 * # Safety
 * `curve` and `out` must be valid pointers.
 */
enum RtsStatus rts_dispersion_summary(const struct RtsCurve *curve, struct RtsSummary *out);

/**
 * Releases a scan. Null is ignored.
 *
 * # Safety
 * `curve` must come from [`rts_dispersion_new`] and not be used afterwards.
 */
void rts_dispersion_free(struct RtsCurve *curve);

/**
 * Escape time `ln(epsilon / delta) / c7`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RtsStatus rts_escape_time(double c7, double epsilon, double delta, double *out);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *rts_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RT_SPECTRA_H */
