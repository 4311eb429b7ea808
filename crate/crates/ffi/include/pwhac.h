#ifndef PWHAC_H
#define PWHAC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PwhacKernel {
  PWHAC_KERNEL_BARTLETT = 0,
  PWHAC_KERNEL_PARZEN = 1,
  PWHAC_KERNEL_QUADRATIC_SPECTRAL = 2,
} PwhacKernel;

typedef enum PwhacRule {
  /**
   * Andrews with the customary constants (Bartlett and QS only).
   */
  PWHAC_RULE_ANDREWS = 0,
  /**
   * Newey–West with rectangular lag weights and c̄ = (1, 1.1447, 1/3).
   */
  PWHAC_RULE_NEWEY_WEST = 1,
  /**
   * Fixed-b, M = b(n−p); `b` is passed separately.
   */
  PWHAC_RULE_FIXED_B = 2,
} PwhacRule;

/**
 * Result codes. `PWHAC_STATUS_INVALID_ARGUMENT` and
 * `PWHAC_STATUS_NOT_APPLICABLE` match the CLI exit statuses 2 and 3.
 */
typedef enum PwhacStatus {
  PWHAC_STATUS_OK = 0,
  PWHAC_STATUS_NULL_POINTER = 1,
  PWHAC_STATUS_INVALID_ARGUMENT = 2,
  PWHAC_STATUS_NOT_APPLICABLE = 3,
  PWHAC_STATUS_INTERNAL = 4,
  PWHAC_STATUS_PANIC = 5,
} PwhacStatus;

typedef enum PwhacVerdict {
  PWHAC_VERDICT_SIZE_ONE = 0,
  PWHAC_VERDICT_POWER_ZERO = 1,
  PWHAC_VERDICT_SIZE_AT_LEAST_HALF = 2,
  PWHAC_VERDICT_SIZE_ONE_SPAN_CASE = 3,
  PWHAC_VERDICT_POSITIVE_UNADJUSTED = 4,
  PWHAC_VERDICT_TRIVIAL_BREAKDOWN = 5,
  PWHAC_VERDICT_INCONCLUSIVE = 6,
} PwhacVerdict;

/**
 * Kernel, bandwidth rule and VAR order.
 */
typedef struct PwhacConfig PwhacConfig;

/**
 * Design and hypothesis.
 */
typedef struct PwhacProblem PwhacProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a problem from `x` (`n × k`), `r_mat` (`q × k`) and `r_vec` (`q`).
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths; `out` must be writable.
 */
enum PwhacStatus pwhac_problem_new(const double *x,
                                   size_t n,
                                   size_t k,
                                   const double *r_mat,
                                   const double *r_vec,
                                   size_t q,
                                   struct PwhacProblem **out_problem);

/**
 * # Safety
 * `problem` must come from [`pwhac_problem_new`] and not be freed twice.
 */
void pwhac_problem_free(struct PwhacProblem *problem);

/**
 * Creates an estimator configuration. `b` is used only by the fixed-b rule.
 *
 * # Safety
 * `out_config` must be writable.
 */
enum PwhacStatus pwhac_config_new(enum PwhacKernel kernel,
                                  enum PwhacRule rule,
                                  size_t p,
                                  double b,
                                  struct PwhacConfig **out_config);

/**
 * Parses a configuration from TOML (`kernel`, `rule`, `p`).
 *
 * # Safety
 * `toml_text` must be a NUL-terminated UTF-8 string; `out_config` writable.
 */
enum PwhacStatus pwhac_config_from_toml(const char *toml_text, struct PwhacConfig **out_config);

/**
 * # Safety
 * `config` must come from a `pwhac_config_*` constructor and not be freed twice.
 */
void pwhac_config_free(struct PwhacConfig *config);

/**
 * `T(y)`; `*out_defined` is 1 when `Ω̂` was well defined and invertible.
 *
 * # Safety
 * Handles must be live; `y` must hold `n` values; outputs writable.
 */
enum PwhacStatus pwhac_test_statistic(const struct PwhacProblem *problem,
                                      const struct PwhacConfig *config,
                                      const double *y,
                                      size_t n,
                                      double *out_t,
                                      int32_t *out_defined);

/**
 * `T̄(y)` of the adjusted test, with the scenario number (1–4).
 *
 * # Safety
 * As for [`pwhac_test_statistic`].
 */
enum PwhacStatus pwhac_adjusted_statistic(const struct PwhacProblem *problem,
                                          const struct PwhacConfig *config,
                                          const double *y,
                                          size_t n,
                                          double *out_t,
                                          int32_t *out_defined,
                                          int32_t *out_scenario);

/**
 * Breakdown verdict of the design for critical value `c`.
 *
 * # Safety
 * Handles must be live; `out_verdict` writable.
 */
enum PwhacStatus pwhac_diagnose(const struct PwhacProblem *problem,
                                const struct PwhacConfig *config,
                                double c,
                                enum PwhacVerdict *out_verdict);

/**
 * Critical value `C(δ)` over the AR(1) family `rho[0..n_rho]`, for the
 * adjusted test (`adjusted != 0`) or the plain one.
 *
 * # Safety
 * Handles must be live; `rho` must hold `n_rho` values; `out_c` writable.
 */
enum PwhacStatus pwhac_calibrate(const struct PwhacProblem *problem,
                                 const struct PwhacConfig *config,
                                 double delta,
                                 size_t reps,
                                 uint64_t seed,
                                 const double *rho,
                                 size_t n_rho,
                                 int32_t adjusted,
                                 double *out_c);

/**
 * Message of the last failing call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pwhac_last_error_message(void);

/**
 * Library version, NUL-terminated, static.
 */
const char *pwhac_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PWHAC_H */
