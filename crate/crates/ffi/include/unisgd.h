#ifndef UNISGD_H
#define UNISGD_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UnisgdNoise {
  UNISGD_NOISE_ZERO = 0,
  UNISGD_NOISE_ISOTROPIC_GAUSSIAN = 1,
  UNISGD_NOISE_TESTER_SAMPLE = 2,
} UnisgdNoise;

typedef enum UnisgdStatus {
  UNISGD_STATUS_OK = 0,
  UNISGD_STATUS_NULL_POINTER = 1,
  UNISGD_STATUS_INVALID_PARAMETER = 2,
  UNISGD_STATUS_DIMENSION_MISMATCH = 3,
  UNISGD_STATUS_NON_FINITE = 4,
  UNISGD_STATUS_UNATTAINABLE = 5,
  UNISGD_STATUS_DEGENERATE = 6,
  UNISGD_STATUS_CONFIG = 7,
  UNISGD_STATUS_IO = 8,
  UNISGD_STATUS_BUFFER_TOO_SMALL = 9,
  UNISGD_STATUS_PANIC = 10,
} UnisgdStatus;

/**
 * Opaque scenario handle.
 */
typedef struct UnisgdScenario UnisgdScenario;

/**
 * Uniform-envelope violation estimate.
 */
typedef struct UnisgdViolationSummary {
  uint64_t trials;
  uint64_t violations;
  uint64_t aborted;
  double rate;
  double se;
  double threshold;
  bool pass;
} UnisgdViolationSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next call into this library from the same thread.
 */
const char *unisgd_last_error_message(void);

/**
 * NUL-terminated version string with static lifetime.
 */
const char *unisgd_version(void);

/**
 * Diagonal quadratic `½ Σ λ_i x_i²` with the given oracle.
 *
 * # Safety
 * `spectrum` and `x0` must point to `dimension` readable doubles; `out`
 * must be writable. On success `*out` owns a handle for
 * [`unisgd_scenario_free`].
 */
enum UnisgdStatus unisgd_scenario_new_quadratic(const double *spectrum,
                                                const double *x0,
                                                size_t dimension,
                                                enum UnisgdNoise noise,
                                                double sigma,
                                                struct UnisgdScenario **out);

/**
 * One-dimensional `(μ/2)(x − θ)²`.
 *
 * # Safety
 * `out` must be writable.
 */
enum UnisgdStatus unisgd_scenario_new_tester(double mu,
                                             double theta,
                                             double x0,
                                             enum UnisgdNoise noise,
                                             double sigma,
                                             struct UnisgdScenario **out);

/**
 * Scenario from INI configuration text (same keys as the CLI).
 *
 * # Safety
 * `ini` must be a NUL-terminated string; `out` must be writable.
 */
enum UnisgdStatus unisgd_scenario_from_ini(const char *ini, struct UnisgdScenario **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `h` must come from a `unisgd_scenario_new_*` call and not be freed twice.
 */
void unisgd_scenario_free(struct UnisgdScenario *h);

/**
 * Problem dimension, or 0 for NULL.
 *
 * # Safety
 * `h` must be NULL or a live handle.
 */
size_t unisgd_scenario_dimension(const struct UnisgdScenario *h);

/**
 * Schedule offset `B` and initial gap `Δ0`.
 *
 * # Safety
 * `h` must be a live handle; `b_out` and `delta0_out` must be writable.
 */
enum UnisgdStatus unisgd_scenario_constants(const struct UnisgdScenario *h,
                                            double *b_out,
                                            double *delta0_out);

/**
 * Runs one trajectory and writes `Δ_0..Δ_horizon` into `gaps`.
 *
 * # Safety
 * `h` must be a live handle; `gaps` must point to `len` writable doubles.
 */
enum UnisgdStatus unisgd_run_gaps(const struct UnisgdScenario *h,
                                  uint64_t horizon,
                                  uint64_t master_seed,
                                  uint64_t trial_index,
                                  double *gaps,
                                  size_t len);

/**
 * Monte Carlo estimate of the uniform-envelope violation rate.
 * `workers = 0` uses all available cores; the result never depends on it.
 *
 * # Safety
 * `h` must be a live handle; `out` must be writable.
 */
enum UnisgdStatus unisgd_verify_uniform(const struct UnisgdScenario *h,
                                        double beta,
                                        uint64_t horizon,
                                        uint64_t trials,
                                        uint64_t master_seed,
                                        size_t n_workers,
                                        struct UnisgdViolationSummary *out);

/**
 * Per-probe last-iterate violation counts, in the order of `probes`.
 *
 * # Safety
 * `h` must be a live handle; `probes` and `violations` must point to
 * `n_probes` readable / writable elements.
 */
enum UnisgdStatus unisgd_verify_last(const struct UnisgdScenario *h,
                                     double beta,
                                     const uint64_t *probes,
                                     size_t n_probes,
                                     uint64_t trials,
                                     uint64_t master_seed,
                                     size_t n_workers,
                                     uint64_t *violations);

/**
 * # Safety
 * `out` must be writable.
 */
enum UnisgdStatus unisgd_last_iterate_bound(double mu,
                                            double lip,
                                            double delta0,
                                            double beta,
                                            uint64_t k,
                                            double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum UnisgdStatus unisgd_uniform_envelope(double mu,
                                          double lip,
                                          double delta0,
                                          double beta,
                                          uint64_t k,
                                          double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum UnisgdStatus unisgd_lower_bound_curve(double mu,
                                           double sigma,
                                           double alpha,
                                           uint64_t n,
                                           double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum UnisgdStatus unisgd_coverage_of_beta(double beta, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum UnisgdStatus unisgd_beta_for_coverage(double coverage, double *out);

/**
 * `θ(v)` for `depth` bits given as bytes 0/1.
 *
 * # Safety
 * `bits` must point to `depth` readable bytes; `out` must be writable.
 */
enum UnisgdStatus unisgd_encode_theta(const uint8_t *bits, size_t depth, double *out);

/**
 * Nearest depth-`depth` codeword to `theta`, written as bytes 0/1.
 *
 * # Safety
 * `bits_out` must point to `depth` writable bytes.
 */
enum UnisgdStatus unisgd_project_to_v(double theta, size_t depth, uint8_t *bits_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNISGD_H */
