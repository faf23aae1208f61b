/* C interface to the optomech verification workbench. */

#ifndef OPTOMECH_H
#define OPTOMECH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Call outcome. Values 2 through 4 coincide with the exit codes the
// bundled CLI uses for the same failure domains.
typedef enum OmStatus {
  OM_STATUS_OK = 0,
  // Null pointer or malformed argument at the boundary itself.
  OM_STATUS_INVALID_ARGUMENT = 1,
  // Input rejected by validation: non-finite or non-positive quantities,
  // bad sweep grids, capacity limits.
  OM_STATUS_VALIDATION = 2,
  // Physics-domain condition: pole guard, resonance requirement,
  // degeneracy, strong state mixing.
  OM_STATUS_PHYSICS = 3,
  // Fit or iteration failure.
  OM_STATUS_CONVERGENCE = 4,
  // A panic was caught at the boundary. Memory is intact but the call
  // did nothing.
  OM_STATUS_PANIC = 5,
} OmStatus;

// Opaque workbench: parameters plus cutoffs and the interaction-channel
// switch. Create with om_workbench_direct or om_workbench_physical, free
// with om_workbench_free. Handles are not thread-safe; share one per
// thread or guard externally.
typedef struct OmWorkbench OmWorkbench;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Create a workbench from frequencies and the vertex strength directly.
// Cutoffs start at 12/12 and the pair-creating channel is on; adjust with
// the setters. On success writes a handle the caller must free.
enum OmStatus om_workbench_direct(double omega_c,
                                  double omega_m,
                                  double g,
                                  struct OmWorkbench **out);

// Create a workbench from hardware numbers: mirror mass, spring constant,
// cavity length, and a single cavity mode number (1 is the fundamental).
// Frequencies and the coupling are derived; query them with the getters.
enum OmStatus om_workbench_physical(double mass,
                                    double spring_constant,
                                    double cavity_length,
                                    uint32_t mode_number,
                                    struct OmWorkbench **out);

// Free a workbench. Null is a no-op.
void om_workbench_free(struct OmWorkbench *wb);

// Set the Fock-space truncation (highest retained occupation, inclusive)
// used by every diagonalization query on this handle.
enum OmStatus om_workbench_set_cutoffs(struct OmWorkbench *wb, size_t photon, size_t phonon);

// Drop the pair-creating interaction channel (keep only the
// photon-number-conserving one) in formulas and diagonalizations alike.
enum OmStatus om_workbench_set_rotating_wave(struct OmWorkbench *wb, bool on);

// Cavity frequency.
enum OmStatus om_workbench_omega_c(const struct OmWorkbench *wb, double *out);

// Mirror frequency.
enum OmStatus om_workbench_omega_m(const struct OmWorkbench *wb, double *out);

// Single-mode vertex strength (negative when derived from hardware
// numbers).
enum OmStatus om_workbench_coupling(const struct OmWorkbench *wb, double *out);

// Closed-form mirror frequency shift at the configured coupling. Honors
// the rotating-wave switch; fails inside pole guards.
enum OmStatus om_workbench_delta_omega_m(const struct OmWorkbench *wb, double *out);

// Closed-form cavity frequency shift at the configured coupling.
enum OmStatus om_workbench_delta_omega_c(const struct OmWorkbench *wb, double *out);

// Closed-form ground-state energy shift. Zero under the rotating-wave
// switch: the shift comes entirely from the pair-creating channel.
enum OmStatus om_workbench_vacuum_shift(const struct OmWorkbench *wb, double *out);

// Published phonon field-strength renormalization factor.
enum OmStatus om_workbench_z_phonon(const struct OmWorkbench *wb, double *out);

// Published photon field-strength renormalization factor.
enum OmStatus om_workbench_z_photon(const struct OmWorkbench *wb, double *out);

// Diagonalization oracle for the level shift of the bare state with the
// given occupations: sweeps the coupling over g_sweep (at least 4 finite
// nonzero weak-regime points), fits shift = c2 g^2 + c4 g^4, and writes
// the fitted c2. residual (root-mean-square misfit) may be null.
// Runtime grows steeply with the cutoffs on the handle.
enum OmStatus om_workbench_level_shift_c2(const struct OmWorkbench *wb,
                                          uint32_t n_photon,
                                          uint32_t n_phonon,
                                          const double *g_sweep,
                                          size_t n_sweep,
                                          double *c2,
                                          double *residual);

// Golden-rule width of the phonon against pair emission for a caller-
// supplied final-state density of states. lifetime (1/width, infinite at
// zero coupling) may be null.
enum OmStatus om_workbench_golden_rule_width(const struct OmWorkbench *wb,
                                             double rho,
                                             double *width,
                                             double *lifetime);

// Resonant phonon-to-photon-pair conversion: evolves |0,1> at the handle
// cutoffs and writes the fitted oscillation frequency of the survival
// probability (the two-level picture predicts sqrt(2)|g|). Requires
// omega_m = 2 omega_c; max_conversion may be null.
enum OmStatus om_workbench_conversion_frequency(const struct OmWorkbench *wb,
                                                double *frequency,
                                                double *max_conversion);

// Render the closed forms as the JSON report schema the CLI emits (no
// diagonalization columns; use the oracle calls for those). On success
// writes a NUL-terminated string the caller must release with
// om_string_free. Identical handles render identical bytes.
enum OmStatus om_workbench_report_json(const struct OmWorkbench *wb, char **out);

// Release a string returned by this library. Null is a no-op.
void om_string_free(char *s);

// Copy the message for the most recent failing call on this thread into
// buf (truncated to cap - 1 bytes, always NUL-terminated when cap > 0)
// and return the full message length in bytes. buf may be null to query
// the length alone.
size_t om_last_error(char *buf, size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPTOMECH_H */
