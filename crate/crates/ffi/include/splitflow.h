#ifndef SPLITFLOW_H
#define SPLITFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  // A required pointer argument was null.
  SF_STATUS_NULL_POINTER = 1,
  // A string was not valid UTF-8, or an index was out of range.
  SF_STATUS_INVALID_ARGUMENT = 2,
  // The configuration was rejected.
  SF_STATUS_CONFIG = 3,
  // The integrator or a solver gave up.
  SF_STATUS_ABORT = 4,
  // File system or snapshot format error.
  SF_STATUS_IO = 5,
  // A panic was caught at the boundary.
  SF_STATUS_INTERNAL = 6,
} SfStatus;

// Parsed run configuration.
typedef struct SfConfig SfConfig;

// A flow state, from a snapshot or the end of a run.
typedef struct SfState SfState;

// Result of a run.
typedef struct SfTrajectory SfTrajectory;

// Subset of a monitor report with fixed layout. Absent quantities are NaN.
typedef struct SfReport {
  double t;
  double vol;
  double curvature_l2_sq;
  double curvature_lp;
  double map_energy_lp;
  double spinor_hess_lq;
  double spinor_hess_sup;
  double datum_energy;
  double inj_lower_bound;
  double diameter_est;
  double velocity_l2;
  double horizontal_l2;
  double horizontal_c0;
} SfReport;

typedef struct SfUniformization {
  size_t steps;
  bool converged;
  double final_time;
  double curvature_sup;
  // Unit-volume flat representative `(g11, g12, g22)`.
  double flat_metric[3];
  double w_min;
  double w_max;
} SfUniformization;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static nul-terminated string.
const char *sf_version(void);

// Message of the last failure on this thread; empty if none. The pointer
// stays valid until the next failing call on this thread.
const char *sf_last_error(void);

// Parses TOML configuration text.
//
// # Safety
// `text` must be a nul-terminated string and `out` a valid pointer.
enum SfStatus sf_config_parse(const char *text, struct SfConfig **out_cfg);

// # Safety
// `cfg` must come from [`sf_config_parse`] or be null.
void sf_config_free(struct SfConfig *cfg);

// Grid size of a configuration.
//
// # Safety
// `cfg` must be a live handle or null.
size_t sf_config_n(const struct SfConfig *cfg);

// Runs a flow configuration. `output_dir` may be null to keep everything
// in memory. Paired configurations are rejected; an aborted run still
// yields a trajectory, see [`sf_trajectory_aborted`].
//
// # Safety
// Pointers must be valid; `output_dir` may be null.
enum SfStatus sf_run(const struct SfConfig *cfg,
                     const char *output_dir,
                     struct SfTrajectory **out_traj);

// # Safety
// `traj` must come from [`sf_run`] or be null.
void sf_trajectory_free(struct SfTrajectory *traj);

// # Safety
// `traj` must be a live handle or null.
size_t sf_trajectory_steps(const struct SfTrajectory *traj);

// # Safety
// `traj` must be a live handle or null.
double sf_trajectory_final_time(const struct SfTrajectory *traj);

// Whether the run ended in a numerical abort or blow-up.
//
// # Safety
// `traj` must be a live handle or null.
bool sf_trajectory_aborted(const struct SfTrajectory *traj);

// # Safety
// `traj` must be a live handle or null.
size_t sf_trajectory_report_count(const struct SfTrajectory *traj);

// Copies report `index` into `out`.
//
// # Safety
// `traj` must be a live handle and `out_report` valid.
enum SfStatus sf_trajectory_report(const struct SfTrajectory *traj,
                                   size_t index,
                                   struct SfReport *out_report);

// Writes the one-line verdict into `buf` (truncated to `cap`) and returns
// its full byte length.
//
// # Safety
// `traj` must be a live handle; `buf` must hold `cap` bytes or be null.
size_t sf_trajectory_verdict(const struct SfTrajectory *traj, char *buf, size_t cap);

// Copies the final state of a run into a new state handle.
//
// # Safety
// `traj` must be a live handle and `out_state` valid.
enum SfStatus sf_trajectory_final_state(const struct SfTrajectory *traj,
                                        struct SfState **out_state);

// Reads a snapshot file.
//
// # Safety
// `path` must be nul-terminated and `out_state` valid.
enum SfStatus sf_snapshot_read(const char *path, struct SfState **out_state);

// Writes a state as a snapshot file.
//
// # Safety
// `state` must be a live handle and `path` nul-terminated.
enum SfStatus sf_snapshot_write(const struct SfState *state, const char *path);

// # Safety
// `state` must come from this library or be null.
void sf_state_free(struct SfState *state);

// # Safety
// `state` must be a live handle or null.
size_t sf_state_n(const struct SfState *state);

// # Safety
// `state` must be a live handle or null.
double sf_state_time(const struct SfState *state);

// `(Vol, ∫R², E)` of a state; `E` is 0 without a datum.
//
// # Safety
// `state` must be a live handle and `out3` point to 3 doubles.
enum SfStatus sf_state_invariants(const struct SfState *state, double *out3);

// Uniformizes the initial conformal metric of a `ricci` configuration.
// Non-convergence within the step budget is reported through
// `converged`, not as an error.
//
// # Safety
// `cfg` must be a live handle and `out_result` valid.
enum SfStatus sf_uniformize(const struct SfConfig *cfg, struct SfUniformization *out_result);

// Runs the whole acceptance suite (minutes). `mutation` 0 runs it as is,
// 1 injects the trace-sign defect. `passed` receives one flag per
// criterion, in order, up to `cap` entries; returns the number of
// criteria that passed.
//
// # Safety
// `passed` must hold `cap` bools or be null.
size_t sf_acceptance_run(uint32_t mutation, bool *passed, size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPLITFLOW_H */
