#ifndef LOWREX_H
#define LOWREX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LowrexStatus {
  LOWREX_STATUS_OK = 0,
  LOWREX_STATUS_NULL_POINTER = 1,
  LOWREX_STATUS_DIMENSION_MISMATCH = 2,
  LOWREX_STATUS_INVALID_ARGUMENT = 3,
  LOWREX_STATUS_UNSUPPORTED = 4,
  LOWREX_STATUS_NOT_INJECTIVE = 5,
  LOWREX_STATUS_RANK_DEFICIENT = 6,
  LOWREX_STATUS_INFEASIBLE = 7,
  LOWREX_STATUS_SINGULAR_JACOBIAN = 8,
  LOWREX_STATUS_INSUFFICIENT_DATA = 9,
  LOWREX_STATUS_CONFIG = 10,
  LOWREX_STATUS_IO = 11,
  LOWREX_STATUS_PANIC = 12,
} LowrexStatus;

typedef enum LowrexPosition {
  LOWREX_POSITION_INTERIOR = 0,
  LOWREX_POSITION_BOUNDARY = 1,
  LOWREX_POSITION_OUTSIDE = 2,
} LowrexPosition;

/**
 * Opaque linear operator `Φ`.
 */
typedef struct LowrexMap LowrexMap;

/**
 * Opaque regularizer `J`.
 */
typedef struct LowrexRegularizer LowrexRegularizer;

/**
 * Scalar fields of a certificate report. `ic` is NaN when not applicable.
 */
typedef struct LowrexCertificateSummary {
  size_t dim_t;
  double sigma_min_t;
  bool injective;
  enum LowrexPosition position;
  double margin;
  double ic;
  bool identifiable;
} LowrexCertificateSummary;

/**
 * Solver settings. `step <= 0` selects the automatic step.
 */
typedef struct LowrexSolveOptions {
  double step;
  bool accelerate;
  size_t max_iter;
  double tol_rel;
} LowrexSolveOptions;

/**
 * Outcome of a solve. `identification_iteration` is -1 when the manifold
 * never stabilized.
 */
typedef struct LowrexSolveInfo {
  size_t iterations;
  bool converged;
  int64_t identification_iteration;
  double step;
} LowrexSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *lowrex_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lowrex_version(void);

/**
 * Map from a row-major `rows × cols` array.
 *
 * # Safety
 * `data` must point to `rows * cols` doubles; `out` must be writable.
 */
enum LowrexStatus lowrex_map_new(size_t rows,
                                 size_t cols,
                                 const double *data,
                                 struct LowrexMap **out_map);

/**
 * `p × n` map with i.i.d. standard normal entries, optionally with unit columns.
 *
 * # Safety
 * `out` must be writable.
 */
enum LowrexStatus lowrex_map_gaussian(size_t p,
                                      size_t n,
                                      uint64_t seed,
                                      bool normalize,
                                      struct LowrexMap **out_map);

/**
 * # Safety
 * `map` must come from a `lowrex_map_*` constructor, or be NULL.
 */
void lowrex_map_free(struct LowrexMap *map);

/**
 * # Safety
 * `map` must be a live handle or NULL (returns 0).
 */
size_t lowrex_map_rows(const struct LowrexMap *map);

/**
 * # Safety
 * `map` must be a live handle or NULL (returns 0).
 */
size_t lowrex_map_cols(const struct LowrexMap *map);

/**
 * `out = Φ x`.
 *
 * # Safety
 * Buffers must hold `x_len` and `out_len` doubles.
 */
enum LowrexStatus lowrex_map_apply(const struct LowrexMap *map,
                                   const double *x,
                                   size_t x_len,
                                   double *result,
                                   size_t result_len);

/**
 * # Safety
 * `out_reg` must be writable.
 */
enum LowrexStatus lowrex_regularizer_l1(struct LowrexRegularizer **out_reg);

/**
 * # Safety
 * `out_reg` must be writable.
 */
enum LowrexStatus lowrex_regularizer_linf(struct LowrexRegularizer **out_reg);

/**
 * Group ℓ1-ℓ2 over contiguous blocks of `block_size` entries.
 *
 * # Safety
 * `out_reg` must be writable.
 */
enum LowrexStatus lowrex_regularizer_group(size_t n,
                                           size_t block_size,
                                           struct LowrexRegularizer **out_reg);

/**
 * Nuclear norm of `n0 × n0` matrices flattened column-major.
 *
 * # Safety
 * `out_reg` must be writable.
 */
enum LowrexStatus lowrex_regularizer_nuclear(size_t n0, struct LowrexRegularizer **out_reg);

/**
 * Analysis ℓ1 `‖D* x‖₁` with `D` given row-major as `n × q`.
 *
 * # Safety
 * `d` must point to `n * q` doubles; `out_reg` must be writable.
 */
enum LowrexStatus lowrex_regularizer_analysis(size_t n,
                                              size_t q,
                                              const double *d,
                                              struct LowrexRegularizer **out_reg);

/**
 * One-dimensional total variation on signals of length `n`.
 *
 * # Safety
 * `out_reg` must be writable.
 */
enum LowrexStatus lowrex_regularizer_tv(size_t n, struct LowrexRegularizer **out_reg);

/**
 * # Safety
 * `reg` must come from a `lowrex_regularizer_*` constructor, or be NULL.
 */
void lowrex_regularizer_free(struct LowrexRegularizer *reg);

/**
 * `*value = J(x)`.
 *
 * # Safety
 * `x` must hold `n` doubles; `value` must be writable.
 */
enum LowrexStatus lowrex_regularizer_eval(const struct LowrexRegularizer *reg,
                                          const double *x,
                                          size_t n,
                                          double *value);

/**
 * `result = Prox_{γJ}(x)`.
 *
 * # Safety
 * `x` and `result` must hold `n` doubles each.
 */
enum LowrexStatus lowrex_regularizer_prox(const struct LowrexRegularizer *reg,
                                          double gamma,
                                          const double *x,
                                          size_t n,
                                          double *result);

/**
 * Linearized pre-certificate `η_F`; fails with `NotInjective` when `Φ` is
 * not injective on the model tangent of `x0`.
 *
 * # Safety
 * `x0` and `eta` must hold `n` doubles each.
 */
enum LowrexStatus lowrex_precertificate(const struct LowrexMap *map,
                                        const struct LowrexRegularizer *reg,
                                        const double *x0,
                                        size_t n,
                                        double *eta);

/**
 * Restricted injectivity and position of `η_F` for `x0`.
 *
 * # Safety
 * `x0` must hold `n` doubles; `summary` must be writable.
 */
enum LowrexStatus lowrex_certificate_report(const struct LowrexMap *map,
                                            const struct LowrexRegularizer *reg,
                                            const double *x0,
                                            size_t n,
                                            struct LowrexCertificateSummary *summary);

struct LowrexSolveOptions lowrex_solve_options_default(void);

/**
 * Forward-backward for `min ½‖y − Φx‖² + λJ(x)`. `opts` and `info` may be
 * NULL.
 *
 * # Safety
 * `y` must hold `p` doubles and `x` must hold `n` doubles.
 */
enum LowrexStatus lowrex_fb_solve(const struct LowrexMap *map,
                                  const double *y,
                                  size_t p,
                                  double lambda,
                                  const struct LowrexRegularizer *reg,
                                  const struct LowrexSolveOptions *opts,
                                  double *x,
                                  size_t n,
                                  struct LowrexSolveInfo *info);

/**
 * Douglas-Rachford for `min J(x) s.t. Φx = y`.
 *
 * # Safety
 * As for [`lowrex_fb_solve`].
 */
enum LowrexStatus lowrex_dr_solve(const struct LowrexMap *map,
                                  const double *y,
                                  size_t p,
                                  const struct LowrexRegularizer *reg,
                                  const struct LowrexSolveOptions *opts,
                                  double *x,
                                  size_t n,
                                  struct LowrexSolveInfo *info);

/**
 * Chambolle-Pock for the analysis prior `min ½‖y − Φx‖² + λ‖D*x‖₁`.
 *
 * # Safety
 * As for [`lowrex_fb_solve`].
 */
enum LowrexStatus lowrex_primal_dual_solve(const struct LowrexMap *map,
                                           const double *y,
                                           size_t p,
                                           double lambda,
                                           const struct LowrexRegularizer *reg,
                                           const struct LowrexSolveOptions *opts,
                                           double *x,
                                           size_t n,
                                           struct LowrexSolveInfo *info);

/**
 * Chambolle-Pock for the noiseless analysis problem `min ‖D*x‖₁ s.t. Φx = y`.
 *
 * # Safety
 * As for [`lowrex_fb_solve`].
 */
enum LowrexStatus lowrex_primal_dual_constrained(const struct LowrexMap *map,
                                                 const double *y,
                                                 size_t p,
                                                 const struct LowrexRegularizer *reg,
                                                 const struct LowrexSolveOptions *opts,
                                                 double *x,
                                                 size_t n,
                                                 struct LowrexSolveInfo *info);

/**
 * Closed-form degrees of freedom at a solution `x_star`.
 *
 * # Safety
 * `x_star` must hold `n` doubles; `dof` must be writable.
 */
enum LowrexStatus lowrex_dof_closed_form(const struct LowrexMap *map,
                                         const struct LowrexRegularizer *reg,
                                         const double *x_star,
                                         size_t n,
                                         double lambda,
                                         double *dof);

/**
 * `‖y − μ‖² + 2σ²·dof − Pσ²`.
 *
 * # Safety
 * `y` and `mu` must hold `p` doubles; `value` must be writable.
 */
enum LowrexStatus lowrex_sure(const double *y,
                              const double *mu,
                              size_t p,
                              double dof,
                              double sigma,
                              double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOWREX_H */
