#ifndef DK_SIM_H
#define DK_SIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum DkStatus {
  DK_STATUS_OK = 0,
  DK_STATUS_NULL_POINTER = 1,
  DK_STATUS_INVALID_ARGUMENT = 2,
  DK_STATUS_CONFIG_ERROR = 3,
  DK_STATUS_NUMERICAL_ABORT = 4,
  DK_STATUS_IO = 5,
  DK_STATUS_GRID_MISMATCH = 6,
  DK_STATUS_PANIC = 7,
} DkStatus;

typedef struct DkConfig DkConfig;

typedef struct DkField DkField;

typedef struct DkGrid DkGrid;

typedef struct DkKernel DkKernel;

typedef struct DkNoise DkNoise;

typedef struct DkTrajectory DkTrajectory;

/**
 * Outcome of the integrability audit.
 */
typedef struct DkLpsReport {
  bool a1_pass;
  bool a2_pass;
} DkLpsReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dk_version(void);

/**
 * Message of the last failed call on this thread; empty if none. Valid
 * until the next failing call on the same thread.
 */
const char *dk_last_error_message(void);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum DkStatus dk_grid_new(size_t dim, size_t n, struct DkGrid **out);

/**
 * # Safety
 * `grid` must come from `dk_grid_new` and not be used afterwards.
 */
void dk_grid_free(struct DkGrid *grid);

/**
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_grid_len(const struct DkGrid *grid, size_t *out);

/**
 * Field from `len` row-major values.
 *
 * # Safety
 * `values` must point to `len` readable doubles.
 */
enum DkStatus dk_field_new(const struct DkGrid *grid,
                           const double *values,
                           size_t len,
                           struct DkField **out);

/**
 * # Safety
 * `out` must point to `len` writable doubles, `len` equal to the grid size.
 */
enum DkStatus dk_field_copy_values(const struct DkField *field, double *out, size_t len);

/**
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_field_integrate(const struct DkField *field, double *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_field_lp_norm(const struct DkField *field, double p, double *out);

/**
 * # Safety
 * `field` must come from this library and not be used afterwards.
 */
void dk_field_free(struct DkField *field);

/**
 * `int Psi(rho)`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_entropy(const struct DkField *field, double *out);

/**
 * `int |grad sqrt rho|^2`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_dissipation(const struct DkField *field, double *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_l1_distance(const struct DkField *a, const struct DkField *b, double *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_kinetic_distance(const struct DkField *a,
                                  const struct DkField *b,
                                  size_t bins,
                                  double *out);

/**
 * Truncated periodic Biot-Savart kernel (d = 2).
 *
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_kernel_biot_savart(const struct DkGrid *grid,
                                    size_t truncation,
                                    struct DkKernel **out);

/**
 * `V_i(x) = amplitude_i sin(2 pi k.x)`; `k` and `amplitude` hold d entries.
 *
 * # Safety
 * `k` and `amplitude` must point to d readable values.
 */
enum DkStatus dk_kernel_single_mode(const struct DkGrid *grid,
                                    const int64_t *k,
                                    const double *amplitude,
                                    struct DkKernel **out);

/**
 * New kernel smoothed at scale `gamma`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_kernel_mollify(const struct DkKernel *kernel, double gamma, struct DkKernel **out);

/**
 * `V * rho`, written component after component (`d * grid_len` values).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DkStatus dk_kernel_apply(const struct DkKernel *kernel,
                              const struct DkField *field,
                              double *out,
                              size_t len);

/**
 * # Safety
 * `kernel` must come from this library and not be used afterwards.
 */
void dk_kernel_free(struct DkKernel *kernel);

/**
 * Audits integrability exponents (use `INFINITY` for infinite ones).
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DkStatus dk_check_lps(size_t d,
                           double p,
                           double pstar,
                           double q,
                           double qstar,
                           struct DkLpsReport *out);

/**
 * Paired sin/cos noise with the same amplitude on every wavevector with
 * `0 < |k| <= cutoff`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_noise_uv(const struct DkGrid *grid,
                          size_t cutoff,
                          double amplitude,
                          struct DkNoise **out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_noise_mode_count(const struct DkNoise *noise, size_t *out);

/**
 * `F1 = sum_k f_k^2` on the grid.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DkStatus dk_noise_f1(const struct DkNoise *noise, double *out, size_t len);

/**
 * # Safety
 * `noise` must come from this library and not be used afterwards.
 */
void dk_noise_free(struct DkNoise *noise);

/**
 * `sigma_n(xi)` and `sigma_n'(xi)`; either output may be null.
 *
 * # Safety
 * Non-null outputs must be valid for writes.
 */
enum DkStatus dk_sigma_eval(size_t index, double xi, double *value, double *derivative);

/**
 * Parses and validates a TOML experiment config.
 *
 * # Safety
 * `text` must be a NUL-terminated string.
 */
enum DkStatus dk_config_parse(const char *text, struct DkConfig **out);

/**
 * # Safety
 * `config` must come from this library and not be used afterwards.
 */
void dk_config_free(struct DkConfig *config);

/**
 * Runs the solver for a parsed config (first replica only).
 *
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_simulate(const struct DkConfig *config, struct DkTrajectory **out);

/**
 * Number of stored snapshots.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DkStatus dk_trajectory_len(const struct DkTrajectory *traj, size_t *out);

/**
 * Diagnostics rows `t, mass, entropy, dissipation, min_rho, l2, l4`,
 * row-major. `rows` receives the row count; pass a null `out` to query it.
 *
 * # Safety
 * A non-null `out` must point to `len` writable doubles.
 */
enum DkStatus dk_trajectory_diagnostics(const struct DkTrajectory *traj,
                                        double *out,
                                        size_t len,
                                        size_t *rows);

/**
 * Copies snapshot `index` (grid size values) and its time.
 *
 * # Safety
 * `out` must point to `len` writable doubles; `time` may be null.
 */
enum DkStatus dk_trajectory_snapshot(const struct DkTrajectory *traj,
                                     size_t index,
                                     double *out,
                                     size_t len,
                                     double *time);

/**
 * # Safety
 * `traj` must come from this library and not be used afterwards.
 */
void dk_trajectory_free(struct DkTrajectory *traj);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DK_SIM_H */
