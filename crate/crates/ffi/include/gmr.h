#ifndef GMR_H
#define GMR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GmrStatus {
  GMR_STATUS_OK = 0,
  GMR_STATUS_NULL_POINTER = 1,
  GMR_STATUS_INVALID_ARGUMENT = 2,
  GMR_STATUS_CONFIG = 3,
  // Non-finite values, failed solves or states leaving the admissible range.
  GMR_STATUS_NUMERICAL = 4,
  GMR_STATUS_IO = 5,
  GMR_STATUS_UNSUPPORTED = 6,
  GMR_STATUS_BUFFER_TOO_SMALL = 7,
  GMR_STATUS_PANIC = 8,
} GmrStatus;

typedef enum GmrField {
  GMR_FIELD_U = 0,
  GMR_FIELD_V = 1,
  GMR_FIELD_THETA = 2,
  GMR_FIELD_SALT = 3,
} GmrField;

// Opaque simulation handle.
typedef struct GmrSimulation GmrSimulation;

// One row of the budget table.
typedef struct GmrBudgets {
  double t;
  double ke;
  double theta_l2;
  double s_l2;
  double theta_min;
  double theta_max;
  double s_min;
  double s_max;
  double s_mean;
  double iso_dissipation;
  double gm_variance;
  double robin_term;
  double energy_residual;
} GmrBudgets;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length excluding the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t gmr_last_error(char *buf, size_t len);

// Static NUL-terminated version string.
const char *gmr_version(void);

// Build a simulation from a JSON configuration (null for defaults) and
// `n_overrides` `key=value` strings applied in order.
//
// # Safety
// `config_json` must be null or a NUL-terminated string; `overrides` must
// point to `n_overrides` NUL-terminated strings (or be null when
// `n_overrides` is 0); `out` must be a valid pointer.
enum GmrStatus gmr_simulation_new(const char *config_json,
                                  const char *const *overrides,
                                  size_t n_overrides,
                                  struct GmrSimulation **out);

// Release a simulation. Null is ignored.
//
// # Safety
// `sim` must be null or a handle from [`gmr_simulation_new`] not yet freed.
void gmr_simulation_free(struct GmrSimulation *sim);

// Advance `n` steps at the stable step size. On failure the handle keeps
// the last valid state.
//
// # Safety
// `sim` must be a live handle.
enum GmrStatus gmr_simulation_step(struct GmrSimulation *sim, size_t n);

// Budgets of the current state.
//
// # Safety
// `sim` must be a live handle and `out` a valid pointer.
enum GmrStatus gmr_simulation_budgets(const struct GmrSimulation *sim, struct GmrBudgets *out);

// Grid dimensions and the number of steps taken so far.
//
// # Safety
// `sim` must be a live handle; the output pointers must be valid.
enum GmrStatus gmr_simulation_info(const struct GmrSimulation *sim,
                                   size_t *nx,
                                   size_t *ny,
                                   size_t *nz,
                                   size_t *steps);

// Copy one prognostic field (x fastest, bottom layer first) into `buf`,
// which must hold `nx * ny * nz` values.
//
// # Safety
// `sim` must be a live handle and `buf` point to `len` writable doubles.
enum GmrStatus gmr_simulation_copy_field(const struct GmrSimulation *sim,
                                         enum GmrField field,
                                         double *buf,
                                         size_t len);

// Run a named invariant suite (`all` for every suite); `failed` receives
// the number of failing checks.
//
// # Safety
// `suite` must be a NUL-terminated string and `failed` a valid pointer.
enum GmrStatus gmr_verify(const char *suite, size_t *failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GMR_H */
