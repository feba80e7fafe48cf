#ifndef CCS_H
#define CCS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CCS_MU 0

#define CCS_NU 1

#define CCS_A1 0

#define CCS_A1A2 1

#define CCS_A1A3 2

#define CCS_A1A2A3 3

/**
 * Standard error from the per-row influence difference.
 */
#define CCS_SE_IF_DIFFERENCE 0

/**
 * Standard error treating the two arms as independent.
 */
#define CCS_SE_INDEPENDENT_ARMS 1

/**
 * Result code of every `ccs_*` call.
 */
typedef enum CcsStatus {
  CCS_STATUS_OK = 0,
  CCS_STATUS_NULL_POINTER = 1,
  CCS_STATUS_INVALID_ARGUMENT = 2,
  CCS_STATUS_DATA = 3,
  CCS_STATUS_ESTIMATION = 4,
  CCS_STATUS_SIMULATION = 5,
  CCS_STATUS_IO = 6,
  CCS_STATUS_PANIC = 7,
} CcsStatus;

/**
 * Opaque dataset handle.
 */
typedef struct CcsDataset CcsDataset;

/**
 * Opaque handle to the reports of one cross-fitted run.
 */
typedef struct CcsEstimate CcsEstimate;

/**
 * One estimator: `estimand` is `CCS_MU` or `CCS_NU`, `assumptions` one of
 * the `CCS_A1*` constants, `arm` 0 or 1.
 */
typedef struct CcsRequest {
  uint32_t estimand;
  uint32_t arm;
  uint32_t assumptions;
} CcsRequest;

typedef struct CcsSummary {
  struct CcsRequest request;
  double point;
  double se;
  double ci_lower;
  double ci_upper;
  size_t n;
  size_t k;
  /**
   * Whether every fold's nuisance fits converged.
   */
  bool converged;
} CcsSummary;

typedef struct CcsContrast {
  double delta;
  double se;
  double ci_lower;
  double ci_upper;
} CcsContrast;

/**
 * Odds ratio of study membership on the outcome within one arm.
 */
typedef struct CcsIndependenceTest {
  uint32_t arm;
  double log_or;
  double se;
  double or_point;
  double or_ci_lower;
  double or_ci_upper;
  bool converged;
  bool separation;
  size_t n;
  /**
   * Whether the 95% interval excludes 1.
   */
  bool rejects;
} CcsIndependenceTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ccs_version(void);

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next `ccs_*` call on the same thread.
 */
const char *ccs_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from a `ccs_*` function that transfers ownership and must
 * not be used afterwards.
 */
void ccs_string_free(char *s);

/**
 * Loads a headered CSV described by a JSON schema file.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `out` must be writable.
 */
enum CcsStatus ccs_dataset_load_csv(const char *data_path,
                                    const char *schema_path,
                                    double pi_t1,
                                    struct CcsDataset **out);

/**
 * Builds a dataset from arrays. `x` holds `n * p` values in row-major
 * order; the covariates are continuous and named `x1..xp`. `r` and `t` hold
 * 0/1 codes; with `binary_outcome` every `y` must be 0 or 1.
 *
 * # Safety
 * Each non-empty array must hold the stated number of elements.
 */
enum CcsStatus ccs_dataset_from_arrays(size_t n,
                                       size_t p,
                                       const double *x,
                                       const uint8_t *r,
                                       const uint8_t *t,
                                       const double *y,
                                       double pi_t1,
                                       bool binary_outcome,
                                       struct CcsDataset **out);

/**
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum CcsStatus ccs_dataset_len(const struct CcsDataset *dataset, size_t *out);

/**
 * Releases a dataset. NULL is ignored.
 *
 * # Safety
 * `dataset` must come from a `ccs_dataset_*` constructor and not be used
 * afterwards.
 */
void ccs_dataset_free(struct CcsDataset *dataset);

/**
 * Cross-fits the default nuisance models with `k` folds and evaluates each
 * request. With `n_requests == 0` every estimator of both arms is run.
 * `epsilon` clips fitted probabilities to `[epsilon, 1 - epsilon]`.
 *
 * # Safety
 * `requests` must hold `n_requests` elements; `out` must be writable.
 */
enum CcsStatus ccs_estimate(const struct CcsDataset *dataset,
                            const struct CcsRequest *requests,
                            size_t n_requests,
                            size_t k,
                            uint64_t seed,
                            double epsilon,
                            struct CcsEstimate **out);

/**
 * # Safety
 * `estimate` must be a live handle; `out` must be writable.
 */
enum CcsStatus ccs_estimate_count(const struct CcsEstimate *estimate, size_t *out);

/**
 * # Safety
 * `estimate` must be a live handle; `out` must be writable.
 */
enum CcsStatus ccs_estimate_get(const struct CcsEstimate *estimate,
                                size_t index,
                                struct CcsSummary *out);

/**
 * Arm-1 minus arm-0 contrast of two reports of the same run and family.
 *
 * # Safety
 * `estimate` must be a live handle; `out` must be writable.
 */
enum CcsStatus ccs_estimate_contrast(const struct CcsEstimate *estimate,
                                     size_t index_arm1,
                                     size_t index_arm0,
                                     uint32_t se_mode,
                                     struct CcsContrast *out);

/**
 * Full reports and contrasts as JSON. Free the string with
 * [`ccs_string_free`].
 *
 * # Safety
 * `estimate` must be a live handle; `out` must be writable.
 */
enum CcsStatus ccs_estimate_to_json(const struct CcsEstimate *estimate, char **out);

/**
 * Releases an estimate. NULL is ignored.
 *
 * # Safety
 * `estimate` must come from [`ccs_estimate`] and not be used afterwards.
 */
void ccs_estimate_free(struct CcsEstimate *estimate);

/**
 * Tests within `arm` whether study membership predicts the outcome given
 * covariates. Requires a binary outcome and both studies in the arm.
 *
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum CcsStatus ccs_test_a2a3(const struct CcsDataset *dataset,
                             uint32_t arm,
                             struct CcsIndependenceTest *out);

/**
 * `P[Z <= z]` for `Z ~ N(mean, variance)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CcsStatus ccs_normal_cdf(double z, double mean, double variance, double *out);

/**
 * `P[Z1 <= a, Z2 <= b]` for a centered bivariate normal with covariance
 * `[[s11, s12], [s12, s22]]`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CcsStatus ccs_bvn_cdf(double a, double b, double s11, double s12, double s22, double *out);

/**
 * Runs a Monte Carlo scenario given as JSON (the `simulate` scenario file
 * format) and returns the metrics tables as JSON. Free the string with
 * [`ccs_string_free`].
 *
 * # Safety
 * `scenario_json` must be a NUL-terminated string; `out` must be writable.
 */
enum CcsStatus ccs_simulate_json(const char *scenario_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CCS_H */
