#ifndef FRACHEM_H
#define FRACHEM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome. The values 2, 3 and 4 match the command-line exit codes.
 */
typedef enum FrachemStatus {
  FRACHEM_STATUS_OK = 0,
  FRACHEM_STATUS_NULL_POINTER = 1,
  FRACHEM_STATUS_CONFIG = 2,
  FRACHEM_STATUS_NUMERICAL = 3,
  FRACHEM_STATUS_INVARIANT = 4,
  FRACHEM_STATUS_BUFFER_TOO_SMALL = 5,
  FRACHEM_STATUS_PANIC = 6,
  FRACHEM_STATUS_INVALID_UTF8 = 7,
} FrachemStatus;

/**
 * Opaque simulation handle.
 */
typedef struct FrachemSim FrachemSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a simulation from TOML configuration text. An empty string gives
 * the default configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FrachemStatus frachem_sim_new_from_config(const char *toml, struct FrachemSim **out);

/**
 * Creates a simulation from a TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FrachemStatus frachem_sim_new_from_file(const char *path, struct FrachemSim **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sim` must come from a `frachem_sim_new_*` call and not be used afterwards.
 */
void frachem_sim_free(struct FrachemSim *sim);

/**
 * Advances by `n_steps` time steps of the configured size.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum FrachemStatus frachem_sim_step(struct FrachemSim *sim, size_t n_steps);

/**
 * Current time.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum FrachemStatus frachem_sim_time(const struct FrachemSim *sim, double *out);

/**
 * Discrete energy of the current state.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum FrachemStatus frachem_sim_energy(const struct FrachemSim *sim, double *out);

/**
 * Spatial mean `⟨u⟩` of the current state.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum FrachemStatus frachem_sim_mass(const struct FrachemSim *sim, double *out);

/**
 * Number of mesh nodes, boundary included; the length `get_u` and `get_mu` fill.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum FrachemStatus frachem_sim_node_count(const struct FrachemSim *sim, size_t *out);

/**
 * Copies nodal `u` on all nodes (zero at both ends) into `buf`.
 *
 * # Safety
 * `sim` must be a live handle and `buf` valid for `len` writes.
 */
enum FrachemStatus frachem_sim_get_u(const struct FrachemSim *sim, double *buf, size_t len);

/**
 * Copies nodal `μ` on all nodes into `buf`.
 *
 * # Safety
 * `sim` must be a live handle and `buf` valid for `len` writes.
 */
enum FrachemStatus frachem_sim_get_mu(const struct FrachemSim *sim, double *buf, size_t len);

/**
 * The normalizing constant `C_{1,β}` of the fractional Laplacian.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FrachemStatus frachem_c_constant(double beta, double *out);

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len` bytes. Returns the full message length plus one, so a
 * caller can size the buffer. `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` writes.
 */
size_t frachem_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *frachem_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRACHEM_H */
