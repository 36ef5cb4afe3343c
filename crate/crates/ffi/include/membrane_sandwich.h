#ifndef MEMBRANE_SANDWICH_H
#define MEMBRANE_SANDWICH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  MS_PARITY_EVEN = 0,
  MS_PARITY_ODD = 1,
} MsParity;

typedef enum {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_POINTER = 1,
  MS_STATUS_INVALID_ARGUMENT = 2,
  MS_STATUS_DEGENERATE = 3,
  MS_STATUS_NO_CONVERGENCE = 4,
  MS_STATUS_DOMAIN = 5,
  MS_STATUS_UNSTABLE = 6,
  MS_STATUS_FIT_FAILED = 7,
  MS_STATUS_BRANCH_EDGE = 8,
  MS_STATUS_PANIC = 9,
  MS_STATUS_OTHER = 10,
} MsStatus;

/**
 * Cavity geometry: mirror reflectivity, length and two membrane positions.
 */
typedef struct MsCavity MsCavity;

/**
 * Linearized optomechanical system.
 */
typedef struct MsCooling MsCooling;

/**
 * Membrane data for the explicit shift function.
 */
typedef struct MsShiftParams MsShiftParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *ms_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *ms_version(void);

/**
 * Intensity reflectivity and transmission phase `arg t` of a dielectric slab.
 *
 * # Safety
 * Out pointers must be valid for writes.
 */
MsStatus ms_slab(double wavelength,
                 double thickness,
                 double index_re,
                 double index_im,
                 double *out_reflectivity,
                 double *out_phase);

/**
 * Finesse of two identical membranes of reflectivity `rm`. `out_clamped` is
 * set to 1 when the value is the lower bound 1 rather than a finesse.
 *
 * # Safety
 * Out pointers must be valid for writes; `out_clamped` may be null.
 */
MsStatus ms_finesse_from_reflectivity(double rm, double *out_finesse, int32_t *out_clamped);

/**
 * Cavity with two identical membranes.
 *
 * # Safety
 * `out` must be valid for writes.
 */
MsStatus ms_cavity_new(double length,
                       double q1,
                       double q2,
                       double thickness,
                       double index_re,
                       double index_im,
                       double mirror_reflectivity,
                       MsCavity **out);

/**
 * # Safety
 * `cavity` must come from [`ms_cavity_new`] and not be used afterwards.
 */
void ms_cavity_free(MsCavity *cavity);

/**
 * Amplitude transmission of the whole cavity.
 *
 * # Safety
 * `cavity` must be a live handle; out pointers must be valid for writes.
 */
MsStatus ms_cavity_transmission(const MsCavity *cavity,
                                double wavelength,
                                double *out_re,
                                double *out_im);

/**
 * Amplitude reflection of the whole cavity.
 *
 * # Safety
 * `cavity` must be a live handle; out pointers must be valid for writes.
 */
MsStatus ms_cavity_reflection(const MsCavity *cavity,
                              double wavelength,
                              double *out_re,
                              double *out_im);

/**
 * Shift-function parameters from the membranes of `cavity` at `wavelength`.
 *
 * # Safety
 * `cavity` must be a live handle; `out` must be valid for writes.
 */
MsStatus ms_shift_params_from_cavity(const MsCavity *cavity,
                                     double wavelength,
                                     MsShiftParams **out);

/**
 * # Safety
 * `params` must come from this library and not be used afterwards.
 */
void ms_shift_params_free(MsShiftParams *params);

/**
 * Mode shift in units of the free spectral range.
 *
 * # Safety
 * `params` must be a live handle; `out` must be valid for writes.
 */
MsStatus ms_shift_function(const MsShiftParams *params,
                           double q1,
                           double q2,
                           MsParity parity,
                           double *out);

/**
 * Couplings `(G1, G2)` in rad/s per metre. Returns `BranchEdge` where the
 * derivative is undefined.
 *
 * # Safety
 * `params` must be a live handle; out pointers must be valid for writes.
 */
MsStatus ms_coupling_gradient(const MsShiftParams *params,
                              double q1,
                              double q2,
                              MsParity parity,
                              double *out_g1,
                              double *out_g2);

/**
 * Solves the mode equation for mode `ell`: wavenumber (rad/m) and shift in
 * units of the free spectral range.
 *
 * # Safety
 * `params` must be a live handle; out pointers must be valid for writes.
 */
MsStatus ms_solve_mode(const MsShiftParams *params,
                       double q1,
                       double q2,
                       int64_t ell,
                       double *out_k,
                       double *out_shift_over_fsr);

/**
 * Built-in two-mode system: `"cooling-low"` or `"cooling-high"`.
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be valid for writes.
 */
MsStatus ms_cooling_preset(const char *name, MsCooling **out);

/**
 * # Safety
 * `cooling` must come from this library and not be used afterwards.
 */
void ms_cooling_free(MsCooling *cooling);

/**
 * Sets the input power (W) and detuning (rad/s, positive = red).
 *
 * # Safety
 * `cooling` must be a live handle.
 */
MsStatus ms_cooling_set_drive(MsCooling *cooling, double power, double detuning);

/**
 * Total one-sided displacement spectral density (m²/Hz) at `n` angular
 * frequencies. Fails with `Unstable` when the linearized system is unstable.
 *
 * # Safety
 * `cooling` must be a live handle; `omega` must hold `n` values and
 * `out_total` room for `n` values.
 */
MsStatus ms_cooling_spectrum(const MsCooling *cooling,
                             const double *omega,
                             size_t n,
                             double *out_total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMBRANE_SANDWICH_H */
