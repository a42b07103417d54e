#ifndef FLEETPOWER_H
#define FLEETPOWER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes of every fallible call.
 */
typedef enum FpStatus {
  FP_STATUS_OK = 0,
  FP_STATUS_INVALID_INPUT = 1,
  FP_STATUS_NULL_POINTER = 2,
  FP_STATUS_PARSE = 3,
  FP_STATUS_IO = 4,
  FP_STATUS_UNKNOWN_SHIP = 5,
  FP_STATUS_WHITE_BOX_UNAVAILABLE = 6,
  FP_STATUS_MISSING_PARAMETER = 7,
  FP_STATUS_BUFFER_TOO_SMALL = 8,
  FP_STATUS_INTERNAL = 9,
} FpStatus;

/**
 * Ships and their regression rows, collected before a fit.
 */
typedef struct FpFleet FpFleet;

/**
 * Posterior draws of a fit.
 */
typedef struct FpPosterior FpPosterior;

/**
 * Hull inputs of the white-box model.
 */
typedef struct FpHull {
  double lwl;
  double breadth;
  double draft;
  double wetted_surface;
  double residual_coeff;
} FpHull;

/**
 * Sampler settings.
 */
typedef struct FpSamplerConfig {
  size_t chains;
  /**
   * Iterations per chain, warmup included.
   */
  size_t iterations;
  size_t warmup;
  uint64_t seed;
  bool freeze_variances;
  /**
   * Prior box multipliers for `a`, `b` and the scales.
   */
  double bound_a;
  double bound_b;
  double bound_sigma;
} FpSamplerConfig;

/**
 * Output arrays of an envelope, each of the grid's length.
 */
typedef struct FpEnvelopeOut {
  double *median;
  double *p25;
  double *p75;
  double *p025;
  double *p975;
} FpEnvelopeOut;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated
 * when `len` exceeds the message length). Returns the message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t fp_last_error_message(char *buf, size_t len);

/**
 * Grey-box mean power `a V^3 + b cos(alpha) U_R^2 V` in watts.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum FpStatus fp_greybox_power(double a,
                               double b,
                               double speed,
                               double wind_speed,
                               double wind_angle,
                               double *out);

/**
 * ITTC-1957 friction coefficient for a Reynolds number above 100.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum FpStatus fp_ittc_friction_coefficient(double reynolds, double *out);

/**
 * White-box propulsion power in watts. Non-positive `density` or
 * `kinematic_viscosity` select the defaults (1025 kg/m^3, 1.188e-6 m^2/s).
 *
 * # Safety
 * `hull` must point to a valid [`FpHull`]; `out` must be valid for a write.
 */
enum FpStatus fp_steam2_power(const struct FpHull *hull,
                              double density,
                              double kinematic_viscosity,
                              double speed,
                              double *out);

/**
 * Creates an empty fleet.
 */
struct FpFleet *fp_fleet_new(void);

/**
 * Releases a fleet.
 *
 * # Safety
 * `fleet` must be null or a handle from [`fp_fleet_new`] not freed before.
 */
void fp_fleet_free(struct FpFleet *fleet);

/**
 * Adds a ship with `n` observations: per-row `V^3`, `cos(alpha) U_R^2 V`
 * and power in watts.
 *
 * # Safety
 * `fleet` must be a live handle, `ship_id` a NUL-terminated string and the
 * three arrays valid for `n` reads.
 */
enum FpStatus fp_fleet_add_ship(struct FpFleet *fleet,
                                const char *ship_id,
                                double gross_tonnage,
                                const double *x_hydro,
                                const double *x_aero,
                                const double *power,
                                size_t n);

/**
 * Number of ships in a fleet, 0 for a null handle.
 *
 * # Safety
 * `fleet` must be null or a live handle.
 */
size_t fp_fleet_num_ships(const struct FpFleet *fleet);

/**
 * Default sampler settings: 4 chains of 2000 iterations, 1000 of them warmup.
 */
struct FpSamplerConfig fp_sampler_config_default(void);

/**
 * Fits ships jointly with the hyper-model. A null `config` uses defaults.
 *
 * # Safety
 * `fleet` must be a live handle, `config` null or valid, `out` valid for a write.
 */
enum FpStatus fp_fit_hierarchical(const struct FpFleet *fleet,
                                  const struct FpSamplerConfig *config,
                                  struct FpPosterior **out);

/**
 * Fits every ship on its own; draws of all ships share one handle.
 *
 * # Safety
 * As [`fp_fit_hierarchical`].
 */
enum FpStatus fp_fit_independent(const struct FpFleet *fleet,
                                 const struct FpSamplerConfig *config,
                                 struct FpPosterior **out);

/**
 * Reads a long-format posterior CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `out` valid for a write.
 */
enum FpStatus fp_posterior_load_csv(const char *path, struct FpPosterior **out);

/**
 * Writes the posterior as a long-format CSV.
 *
 * # Safety
 * `post` must be a live handle and `path` a NUL-terminated string.
 */
enum FpStatus fp_posterior_save_csv(const struct FpPosterior *post, const char *path);

/**
 * Releases a posterior.
 *
 * # Safety
 * `post` must be null or a live handle not freed before.
 */
void fp_posterior_free(struct FpPosterior *post);

/**
 * Number of parameters, 0 for a null handle.
 *
 * # Safety
 * `post` must be null or a live handle.
 */
size_t fp_posterior_num_params(const struct FpPosterior *post);

/**
 * Number of chains, 0 for a null handle.
 *
 * # Safety
 * `post` must be null or a live handle.
 */
size_t fp_posterior_num_chains(const struct FpPosterior *post);

/**
 * Kept draws per chain, 0 for a null handle.
 *
 * # Safety
 * `post` must be null or a live handle.
 */
size_t fp_posterior_num_draws(const struct FpPosterior *post);

/**
 * Copies the name of parameter `index` into `buf`; returns its length, or
 * 0 when the handle is null or the index out of range.
 *
 * # Safety
 * `post` must be null or a live handle; `buf` null or valid for `len` bytes.
 */
size_t fp_posterior_param_name(const struct FpPosterior *post, size_t index, char *buf, size_t len);

/**
 * Copies all draws of a parameter, chains concatenated, into `out`
 * (`len` must be at least chains times draws).
 *
 * # Safety
 * `post` must be a live handle, `name` a NUL-terminated string and `out`
 * valid for `len` writes.
 */
enum FpStatus fp_posterior_draws(const struct FpPosterior *post,
                                 const char *name,
                                 double *out,
                                 size_t len);

/**
 * Split R-hat and effective sample size of one parameter.
 *
 * # Safety
 * `post` must be a live handle, `name` a NUL-terminated string and both
 * outputs valid for a write.
 */
enum FpStatus fp_posterior_convergence(const struct FpPosterior *post,
                                       const char *name,
                                       double *rhat,
                                       double *ess);

/**
 * Envelope for a ship known only by gross tonnage.
 *
 * # Safety
 * `post` must be a live handle, `speeds` valid for `n` reads and every
 * array of `out` valid for `n` writes.
 */
enum FpStatus fp_predict_prior_based(const struct FpPosterior *post,
                                     double gross_tonnage,
                                     const double *speeds,
                                     size_t n,
                                     double wind_effect,
                                     bool include_hyper_noise,
                                     uint64_t seed,
                                     const struct FpEnvelopeOut *out);

/**
 * Envelope over one ship's coefficient draws (parameter uncertainty only).
 *
 * # Safety
 * As [`fp_predict_prior_based`]; `ship_id` must be a NUL-terminated string.
 */
enum FpStatus fp_predict_ship_specific(const struct FpPosterior *post,
                                       const char *ship_id,
                                       const double *speeds,
                                       size_t n,
                                       double wind_effect,
                                       const struct FpEnvelopeOut *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLEETPOWER_H */
