#ifndef SO3VAE_H
#define SO3VAE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Rotation-valued readout heads over unconstrained inputs.
 */
typedef enum So3vaeHead {
  /**
   * 3 inputs: exponential of the algebra element.
   */
  SO3VAE_HEAD_ALGEBRA = 0,
  /**
   * 4 inputs: normalized quaternion.
   */
  SO3VAE_HEAD_QUATERNION = 1,
  /**
   * 5 inputs: axis on S^2 plus angle on S^1.
   */
  SO3VAE_HEAD_S2S1 = 2,
  /**
   * 6 inputs: two frame vectors, orthonormalized.
   */
  SO3VAE_HEAD_S2S2 = 3,
} So3vaeHead;

/**
 * Result of every FFI call.
 */
typedef enum So3vaeStatus {
  /**
   * Success.
   */
  SO3VAE_STATUS_OK = 0,
  /**
   * A pointer argument was NULL.
   */
  SO3VAE_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of domain (bad rotation, bad scale, ...).
   */
  SO3VAE_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The computation is undefined at the requested point.
   */
  SO3VAE_STATUS_SINGULAR = 3,
  /**
   * An unexpected internal failure.
   */
  SO3VAE_STATUS_INTERNAL = 4,
} So3vaeStatus;

/**
 * Block structure of a band-limited function space behind an opaque handle.
 */
typedef struct So3vaeRep So3vaeRep;

/**
 * Deterministic stream cipher RNG behind an opaque handle.
 */
typedef struct So3vaeRng So3vaeRng;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Rodrigues exponential: axis-angle vector `v[3]` to rotation `out[9]`.
 */
enum So3vaeStatus so3vae_exp_map(const double *v, double *out);

/**
 * Principal logarithm: rotation `r[9]` to axis-angle `out[3]`.
 */
enum So3vaeStatus so3vae_log_map(const double *r, double *out);

/**
 * Rotation angle in [0, pi].
 */
enum So3vaeStatus so3vae_rotation_angle(const double *r, double *out);

/**
 * Unit quaternion `q[4]` (w, x, y, z; normalized internally) to rotation.
 */
enum So3vaeStatus so3vae_quat_to_rotation(const double *q, double *out);

/**
 * Rotation to unit quaternion `out[4]` (w >= 0 branch).
 */
enum So3vaeStatus so3vae_rotation_to_quat(const double *r, double *out);

/**
 * Creates an RNG seeded with `seed`. Never fails.
 */
struct So3vaeRng *so3vae_rng_new(uint64_t seed);

/**
 * Releases an RNG handle. NULL is ignored.
 */
void so3vae_rng_free(struct So3vaeRng *rng);

/**
 * Draws one rotation from the wrapped distribution centered at `mu[9]`
 * with per-axis scale `sigma[3]`.
 */
enum So3vaeStatus so3vae_gauss_sample(struct So3vaeRng *rng,
                                      const double *mu,
                                      const double *sigma,
                                      double *out);

/**
 * Log-density of the wrapped distribution at `r[9]`. `k_max` controls the
 * wrapping truncation (5 covers scales up to about 1); `normalized`
 * selects the unit-mass Haar convention, otherwise Haar has mass 8 pi^2.
 */
enum So3vaeStatus so3vae_gauss_log_density(const double *mu,
                                           const double *sigma,
                                           const double *r,
                                           uint32_t k_max,
                                           bool normalized,
                                           double *out);

/**
 * Monte Carlo entropy estimate of the wrapped distribution; writes the
 * estimate and its standard error.
 */
enum So3vaeStatus so3vae_gauss_entropy(struct So3vaeRng *rng,
                                       const double *sigma,
                                       size_t n_samples,
                                       uint32_t k_max,
                                       bool normalized,
                                       double *out_entropy,
                                       double *out_stderr);

/**
 * Creates a representation with degrees 0..=`max_degree`, each repeated
 * `multiplicity` times. Returns NULL when the arguments are out of range.
 */
struct So3vaeRep *so3vae_rep_new(size_t max_degree, size_t multiplicity);

/**
 * Releases a representation handle. NULL is ignored.
 */
void so3vae_rep_free(struct So3vaeRep *rep);

/**
 * Total coefficient dimension of the representation.
 */
enum So3vaeStatus so3vae_rep_dim(const struct So3vaeRep *rep, size_t *out);

/**
 * Applies the rotation to a coefficient vector: `out = D(r) f`. Both
 * buffers must hold `so3vae_rep_dim` doubles and may not alias.
 */
enum So3vaeStatus so3vae_rep_act(const struct So3vaeRep *rep,
                                 const double *r,
                                 const double *f,
                                 double *out);

/**
 * Number of raw inputs the head consumes.
 */
size_t so3vae_head_input_dim(enum So3vaeHead head);

/**
 * Maps `raw` (of the head's input dimension) to a rotation.
 */
enum So3vaeStatus so3vae_head_apply(enum So3vaeHead head, const double *raw, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SO3VAE_H */
