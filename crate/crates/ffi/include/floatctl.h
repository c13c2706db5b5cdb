#ifndef FLOATCTL_H
#define FLOATCTL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Length of the observation vector.
 */
#define FC_OBS_DIM 10

/**
 * Number of thrusters (bits used in a mask).
 */
#define FC_NUM_THRUSTERS 8

typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_ARGUMENT = 2,
  FC_STATUS_CONFIG = 3,
  FC_STATUS_IO = 4,
  FC_STATUS_SOLVER = 5,
  FC_STATUS_EPISODE_DONE = 6,
  FC_STATUS_INTERNAL = 7,
} FcStatus;

/**
 * An environment plus the most recent observation it produced.
 */
typedef struct FcEnv FcEnv;

typedef struct FcLqr FcLqr;

typedef struct FcPolicy FcPolicy;

/**
 * Planar state of the platform.
 */
typedef struct FcState {
  double x;
  double y;
  double theta;
  double vx;
  double vy;
  double omega;
  /**
   * Steps taken in the current episode.
   */
  uint64_t step;
} FcState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer stays
 * valid until the next call into this library from the same thread.
 */
const char *fc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fc_version(void);

/**
 * Creates a go-to-pose or track-velocity environment.
 *
 * `config_toml` may be NULL for defaults; only the `platform`, `disturbance`
 * and `env` sections are used. `obs_out`, if not NULL, receives the first
 * observation (`FC_OBS_DIM` doubles).
 *
 * # Safety
 * `config_toml` must be NULL or a NUL-terminated string. `out` must be a valid
 * pointer. `obs_out` must be NULL or point to `FC_OBS_DIM` writable doubles.
 */
enum FcStatus fc_env_new(const char *config_toml,
                         uint64_t seed,
                         struct FcEnv **out,
                         double *obs_out);

/**
 * # Safety
 * `env` must be NULL or a handle from [`fc_env_new`] not yet freed.
 */
void fc_env_free(struct FcEnv *env);

/**
 * Starts a new episode.
 *
 * # Safety
 * `env` must be a live handle; `obs_out` NULL or `FC_OBS_DIM` writable doubles.
 */
enum FcStatus fc_env_reset(struct FcEnv *env, double *obs_out);

/**
 * Advances one control step with the thrusters in `mask`.
 *
 * # Safety
 * `env` must be a live handle. Each output pointer must be NULL or valid
 * (`obs_out` for `FC_OBS_DIM` doubles).
 */
enum FcStatus fc_env_step(struct FcEnv *env,
                          uint8_t mask,
                          double *obs_out,
                          double *reward_out,
                          bool *done_out);

/**
 * True state of the platform (no observation noise).
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum FcStatus fc_env_state(const struct FcEnv *env, struct FcState *out);

/**
 * Creates an LQR controller from the `platform` and `lqr` config sections.
 *
 * # Safety
 * `config_toml` must be NULL or NUL-terminated; `out` must be valid.
 */
enum FcStatus fc_lqr_new(const char *config_toml, struct FcLqr **out);

/**
 * # Safety
 * `lqr` must be NULL or a handle from [`fc_lqr_new`] not yet freed.
 */
void fc_lqr_free(struct FcLqr *lqr);

/**
 * Computes the thruster mask for the environment's latest observation.
 * Returns `Solver` if the Riccati solve failed on this step (the mask is
 * then all-off).
 *
 * # Safety
 * `lqr` and `env` must be live handles; `mask_out` must be valid.
 */
enum FcStatus fc_lqr_act(struct FcLqr *lqr, const struct FcEnv *env, uint8_t *mask_out);

/**
 * Loads a policy checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FcStatus fc_policy_load(const char *path, struct FcPolicy **out);

/**
 * # Safety
 * `policy` must be NULL or a handle from [`fc_policy_load`] not yet freed.
 */
void fc_policy_free(struct FcPolicy *policy);

/**
 * Firing probabilities for a raw (unnormalized) observation.
 *
 * # Safety
 * `policy` must be live, `obs` must point to `FC_OBS_DIM` doubles and
 * `probs_out` to `FC_NUM_THRUSTERS` writable doubles.
 */
enum FcStatus fc_policy_probs(const struct FcPolicy *policy, const double *obs, double *probs_out);

/**
 * Deterministic thruster mask (probability at least one half) for the
 * environment's latest observation.
 *
 * # Safety
 * `policy` and `env` must be live handles; `mask_out` must be valid.
 */
enum FcStatus fc_policy_act(struct FcPolicy *policy, const struct FcEnv *env, uint8_t *mask_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOATCTL_H */
