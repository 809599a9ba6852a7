#ifndef CFS_CORE_H
#define CFS_CORE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CfsStatus {
  CFS_STATUS_OK = 0,
  CFS_STATUS_NULL_POINTER = 1,
  CFS_STATUS_INVALID_ARGUMENT = 2,
  CFS_STATUS_DIMENSION = 3,
  CFS_STATUS_SINGULAR = 4,
  CFS_STATUS_NUMERICAL = 5,
  CFS_STATUS_IO = 6,
  CFS_STATUS_PANIC = 7,
} CfsStatus;

/**
 * Opaque snapshot handle.
 */
typedef struct CfsSnapshot CfsSnapshot;

/**
 * Opaque state handle: field setup plus evaluation table.
 */
typedef struct CfsState CfsState;

/**
 * Opaque system handle.
 */
typedef struct CfsSystem CfsSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null.
 */
size_t cfs_last_error(char *buf, size_t len);

/**
 * Parses a JSON system document.
 *
 * # Safety
 * `json` must be a NUL-terminated string, `out` a valid pointer.
 */
enum CfsStatus cfs_system_from_json(const char *json, struct CfsSystem **out);

/**
 * Reference system: 0 for the two-point system, 1 for the four-point system.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CfsStatus cfs_system_fixture(uint32_t kind, struct CfsSystem **out);

/**
 * # Safety
 * `sys` must come from this library and not be used afterwards.
 */
void cfs_system_free(struct CfsSystem *sys);

/**
 * # Safety
 * Valid handle and output pointer.
 */
enum CfsStatus cfs_system_point_count(const struct CfsSystem *sys, size_t *out);

/**
 * # Safety
 * Valid handle and output pointer.
 */
enum CfsStatus cfs_causal_action(const struct CfsSystem *sys, double *out);

/**
 * Nonlinear surface layer integral with the system's own interaction map
 * (the identity when it has none). A NaN `cut_time` selects the midpoint.
 *
 * # Safety
 * Valid handle and output pointer.
 */
enum CfsStatus cfs_gamma(const struct CfsSystem *sys, double cut_time, double *out);

/**
 * Samples `samples` torus elements and returns the snapshot with the
 * partition function estimate.
 *
 * # Safety
 * Valid handle and output pointers.
 */
enum CfsStatus cfs_partition(const struct CfsSystem *sys,
                             double cut_time,
                             double beta,
                             size_t samples,
                             uint64_t seed,
                             struct CfsSnapshot **out,
                             double *z_hat,
                             double *stderr);

/**
 * # Safety
 * Valid handle and output pointer.
 */
enum CfsStatus cfs_snapshot_log_z(const struct CfsSnapshot *snap, double *out);

/**
 * # Safety
 * `snap` must come from this library and not be used afterwards.
 */
void cfs_snapshot_free(struct CfsSnapshot *snap);

/**
 * Builds the field modes of the system and the evaluation table of the snapshot.
 *
 * # Safety
 * Valid handles and output pointer.
 */
enum CfsStatus cfs_state_new(const struct CfsSystem *sys,
                             const struct CfsSnapshot *snap,
                             struct CfsState **out);

/**
 * Number of bosonic and fermionic modes of a state.
 *
 * # Safety
 * Valid handle and output pointers.
 */
enum CfsStatus cfs_state_modes(const struct CfsState *state, size_t *bosons, size_t *fermions);

/**
 * Evaluates an element written as `coeff * word ; ...`, e.g. `fd(p1) f(p1)`.
 *
 * # Safety
 * Valid handle, NUL-terminated `element`, valid output pointers.
 */
enum CfsStatus cfs_state_eval(const struct CfsState *state,
                              const char *element,
                              double *re,
                              double *im);

/**
 * # Safety
 * `state` must come from this library and not be used afterwards.
 */
void cfs_state_free(struct CfsState *state);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFS_CORE_H */
