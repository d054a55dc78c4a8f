#ifndef QCHAOS_H
#define QCHAOS_H

/* Generated by cbindgen from crates/ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum QchaosStatus {
  QCHAOS_STATUS_OK = 0,
  QCHAOS_STATUS_NULL_POINTER = 1,
  QCHAOS_STATUS_INVALID_ARGUMENT = 2,
  QCHAOS_STATUS_INVALID_GRID = 3,
  QCHAOS_STATUS_INVALID_MODEL = 4,
  QCHAOS_STATUS_GRID_OVERFLOW = 5,
  QCHAOS_STATUS_NONFINITE_STATE = 6,
  QCHAOS_STATUS_STRETCH_OVERFLOW = 7,
  QCHAOS_STATUS_SINGULAR_POINT = 8,
  QCHAOS_STATUS_NUMERICAL_FAILURE = 9,
  QCHAOS_STATUS_INVARIANT_VIOLATION = 10,
  QCHAOS_STATUS_CONFIG_ERROR = 11,
  QCHAOS_STATUS_IO_ERROR = 12,
  QCHAOS_STATUS_PANIC = 13,
} QchaosStatus;

/**
 * Opaque model: potential, mass, ħ, measurement strength and diffusion.
 */
typedef struct QchaosModel QchaosModel;

/**
 * Opaque reproducible Wiener-increment stream.
 */
typedef struct QchaosNoise QchaosNoise;

/**
 * Opaque split-step propagator for one model, grid and time step.
 */
typedef struct QchaosPropagator QchaosPropagator;

/**
 * Opaque wavefunction on a uniform grid.
 */
typedef struct QchaosState QchaosState;

/**
 * Force `F = −∂ₓV` and its first two x-derivatives at `(x, t)`.
 */
typedef struct QchaosForce {
  double force;
  double gradient;
  double curvature;
} QchaosForce;

/**
 * Centroid and second moments of a state.
 */
typedef struct QchaosMoments {
  double t;
  double x;
  double p;
  double vx;
  double vp;
  double cxp;
} QchaosMoments;

/**
 * Smoothing time and fold spacing.
 */
typedef struct QchaosTStar {
  double t_star;
  double fold_spacing;
  bool no_root;
} QchaosTStar;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string, static storage.
 */
const char *qchaos_version(void);

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes, or 0 if
 * there is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t qchaos_last_error_message(char *buf, size_t len);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library, freed once.
 */
void qchaos_string_free(char *s);

/**
 * The driven Duffing oscillator with `ħ = 1`, `k = 0`, `D = 0`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum QchaosStatus qchaos_model_duffing(struct QchaosModel **out);

/**
 * Model with `V(x, t) = Σ coeffs[j] x^j + drive_amp · x · cos(drive_omega t)`.
 *
 * # Safety
 * `coeffs` must point to `n_coeffs` values; `out` must be valid.
 */
enum QchaosStatus qchaos_model_new(const double *coeffs,
                                   size_t n_coeffs,
                                   double drive_amp,
                                   double drive_omega,
                                   double mass,
                                   double hbar,
                                   double k,
                                   double diffusion,
                                   struct QchaosModel **out);

/**
 * Copy of `model` with new `ħ`, `k` and `D`.
 *
 * # Safety
 * `model` and `out` must be valid.
 */
enum QchaosStatus qchaos_model_with_parameters(const struct QchaosModel *model,
                                               double hbar,
                                               double k,
                                               double diffusion,
                                               struct QchaosModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, freed once.
 */
void qchaos_model_free(struct QchaosModel *model);

/**
 * # Safety
 * Pointers must be valid.
 */
enum QchaosStatus qchaos_model_period(const struct QchaosModel *model, double *period);

/**
 * `V(x, t)`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum QchaosStatus qchaos_model_potential(const struct QchaosModel *model,
                                         double x,
                                         double t,
                                         double *v);

/**
 * # Safety
 * Pointers must be valid.
 */
enum QchaosStatus qchaos_model_force(const struct QchaosModel *model,
                                     double x,
                                     double t,
                                     struct QchaosForce *f);

/**
 * Stream `index` under `base_seed`, increments of variance `dt`.
 *
 * # Safety
 * `out` must be valid.
 */
enum QchaosStatus qchaos_noise_new(uint64_t base_seed,
                                   uint64_t index,
                                   double dt,
                                   struct QchaosNoise **out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum QchaosStatus qchaos_noise_next(struct QchaosNoise *noise, double *dw);

/**
 * # Safety
 * `noise` must be null or a handle from this library, freed once.
 */
void qchaos_noise_free(struct QchaosNoise *noise);

/**
 * Minimum-uncertainty Gaussian at `(x0, p0)` with position width `width`
 * on `n` points spanning `[x_min, x_max)`.
 *
 * # Safety
 * `out` must be valid.
 */
enum QchaosStatus qchaos_state_coherent(double x_min,
                                        double x_max,
                                        size_t n,
                                        double hbar,
                                        double x0,
                                        double p0,
                                        double width,
                                        struct QchaosState **out);

/**
 * # Safety
 * `state` must be null or a handle from this library, freed once.
 */
void qchaos_state_free(struct QchaosState *state);

/**
 * # Safety
 * Pointers must be valid.
 */
enum QchaosStatus qchaos_state_moments(const struct QchaosState *state, struct QchaosMoments *m);

/**
 * `∫|ψ|² dx`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum QchaosStatus qchaos_state_norm(const struct QchaosState *state, double *norm);

/**
 * Copy `|ψ(x_i)|²` into `density`, which must hold `len` values; `len`
 * must equal the grid size.
 *
 * # Safety
 * `density` must point to `len` writable values.
 */
enum QchaosStatus qchaos_state_density(const struct QchaosState *state,
                                       double *density,
                                       size_t len);

/**
 * # Safety
 * `model` and `out` must be valid.
 */
enum QchaosStatus qchaos_propagator_new(const struct QchaosModel *model,
                                        double x_min,
                                        double x_max,
                                        size_t n,
                                        double dt,
                                        struct QchaosPropagator **out);

/**
 * # Safety
 * `prop` must be null or a handle from this library, freed once.
 */
void qchaos_propagator_free(struct QchaosPropagator *prop);

/**
 * `steps` conditioned steps drawing increments from `noise`; the summed
 * record increment is written to `dy_sum` when it is non-null. The state
 * is left unchanged on failure.
 *
 * # Safety
 * Handles must be valid; `dy_sum` may be null.
 */
enum QchaosStatus qchaos_propagator_sse(struct QchaosPropagator *prop,
                                        struct QchaosState *state,
                                        struct QchaosNoise *noise,
                                        size_t steps,
                                        double *dy_sum);

/**
 * `steps` unitary steps.
 *
 * # Safety
 * Handles must be valid.
 */
enum QchaosStatus qchaos_propagator_isolated(struct QchaosPropagator *prop,
                                             struct QchaosState *state,
                                             size_t steps);

/**
 * # Safety
 * `out` must be valid.
 */
enum QchaosStatus qchaos_t_star(double lambda,
                                double diffusion,
                                double mass,
                                double area,
                                double u0,
                                struct QchaosTStar *out);

/**
 * Maximal exponent (per unit model time) of the noiseless flow from the
 * variational equations.
 *
 * # Safety
 * Pointers must be valid.
 */
enum QchaosStatus qchaos_tangent_oracle(const struct QchaosModel *model,
                                        double x0,
                                        double p0,
                                        double dt,
                                        size_t steps,
                                        size_t renorm_steps,
                                        double *lambda);

/**
 * Strong-QCT report at `(x, p, t)` with physical action `action`, record
 * window `window` (model time) and tolerance `tolerance`, using default
 * thresholds. Writes the overall verdict and, if `json` is non-null, the
 * report as a JSON string.
 *
 * # Safety
 * `model` and `all_satisfied` must be valid; `json` may be null.
 */
enum QchaosStatus qchaos_strong_qct_report(const struct QchaosModel *model,
                                           double x,
                                           double p,
                                           double t,
                                           double action,
                                           double window,
                                           double tolerance,
                                           bool *all_satisfied,
                                           char **json);

/**
 * Run the experiment described by the TOML file at `config_path`. `out_dir`
 * (nullable) overrides the configured output directory. The summary is
 * returned as JSON through `summary` when it is non-null.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out_dir` and `summary`
 * may be null.
 */
enum QchaosStatus qchaos_run_experiment(const char *config_path,
                                        const char *out_dir,
                                        char **summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCHAOS_H */
