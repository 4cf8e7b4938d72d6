#ifndef CROWBAR_H
#define CROWBAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CrowbarStatus {
  CROWBAR_STATUS_OK = 0,
  CROWBAR_STATUS_NULL_POINTER = 1,
  CROWBAR_STATUS_INVALID_PARAMETER = 2,
  CROWBAR_STATUS_DEGENERATE_IMPEDANCE = 3,
  CROWBAR_STATUS_INFEASIBLE = 4,
  CROWBAR_STATUS_NON_FINITE = 5,
  // Diode iteration, singular matrix or energy-balance failure.
  CROWBAR_STATUS_SIMULATION = 6,
  CROWBAR_STATUS_OUT_OF_RANGE = 7,
  // Malformed JSON or a bad string argument.
  CROWBAR_STATUS_PARSE = 8,
  CROWBAR_STATUS_IO = 9,
  CROWBAR_STATUS_OTHER = 10,
  CROWBAR_STATUS_PANIC = 11,
} CrowbarStatus;

typedef enum CrowbarTopology {
  CROWBAR_TOPOLOGY_PARALLEL = 0,
  CROWBAR_TOPOLOGY_SERIES = 1,
} CrowbarTopology;

// Closed-form fault-current model.
typedef struct CrowbarModel CrowbarModel;

// Simulated fault transient.
typedef struct CrowbarSimTrace CrowbarSimTrace;

// Supply under fault.
typedef struct CrowbarSystem CrowbarSystem;

typedef struct CrowbarModelSummary {
  // A
  double i_f_base;
  // 1/s
  double delta;
  // rad/s
  double omega_d;
  double k_c;
  double x_r_system;
  // A
  double cap_peak;
  // s
  double cap_tau;
} CrowbarModelSummary;

typedef struct CrowbarSimSample {
  double t;
  double i_dc;
  double v_dc;
  double ji;
} CrowbarSimSample;

typedef struct CrowbarFuseMaterial {
  // Conductivity at t_o, S/m.
  double sigma_o;
  // Temperature coefficient of resistance, 1/°C.
  double alpha_o;
  // Density, kg/m³.
  double rho;
  // Specific heat, J/(kg·°C).
  double c_p;
  // Ambient temperature, °C.
  double t_o;
  // Melting temperature, °C.
  double t_m;
} CrowbarFuseMaterial;

typedef struct CrowbarFuseDesign {
  // m
  double diameter;
  // m
  double length;
  // A²s
  double j_im;
  // J
  double e_fm;
  uint32_t nearest_swg;
} CrowbarFuseDesign;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` as a
// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
// message length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t crowbar_last_error(char *buf, uintptr_t len);

// The laboratory test setup: 1700 V precharge for parallel, 3400 V for series.
struct CrowbarSystem *crowbar_system_test_setup(enum CrowbarTopology topology);

// Parses a system JSON document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum CrowbarStatus crowbar_system_from_json(const char *json, struct CrowbarSystem **out);

// # Safety
// `system` must be null or a live handle.
void crowbar_system_set_topology(struct CrowbarSystem *system, enum CrowbarTopology topology);

// # Safety
// `system` must be null or a handle not yet freed.
void crowbar_system_free(struct CrowbarSystem *system);

// Builds the closed-form model with the published k_c polynomial.
//
// # Safety
// `system` must be a live handle and `out` a valid pointer.
enum CrowbarStatus crowbar_model_build(const struct CrowbarSystem *system,
                                       struct CrowbarModel **out);

// # Safety
// `model` must be null or a handle not yet freed.
void crowbar_model_free(struct CrowbarModel *model);

// DC fault current at `t` seconds, A. NaN for a null handle.
//
// # Safety
// `model` must be null or a live handle.
double crowbar_model_evaluate(const struct CrowbarModel *model, double t);

// ∫₀ᵗ i² dt, A²s.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum CrowbarStatus crowbar_model_joules_integral(const struct CrowbarModel *model,
                                                 double t,
                                                 double *out);

// Peak current and its time on [0, 120 ms].
//
// # Safety
// `model` must be a live handle; `peak` and `t_peak` valid pointers.
enum CrowbarStatus crowbar_model_peak(const struct CrowbarModel *model,
                                      double *peak,
                                      double *t_peak);

// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum CrowbarStatus crowbar_model_summary(const struct CrowbarModel *model,
                                         struct CrowbarModelSummary *out);

// Published correction factor at `x_r_system`. Extrapolates outside
// [0.01, 3.6].
double crowbar_kc_polynomial(double x_r_system);

// Simulates the full fault circuit for `duration` seconds at the default
// 10 µs step. A NaN `fault_angle` selects the worst-case angle.
//
// # Safety
// `system` must be a live handle and `out` a valid pointer.
enum CrowbarStatus crowbar_sim_run(const struct CrowbarSystem *system,
                                   double fault_angle,
                                   double duration,
                                   bool include_dc_cap,
                                   struct CrowbarSimTrace **out);

// # Safety
// `trace` must be null or a handle not yet freed.
void crowbar_sim_free(struct CrowbarSimTrace *trace);

// Number of samples; 0 for a null handle.
//
// # Safety
// `trace` must be null or a live handle.
uintptr_t crowbar_sim_len(const struct CrowbarSimTrace *trace);

// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum CrowbarStatus crowbar_sim_sample(const struct CrowbarSimTrace *trace,
                                      uintptr_t index,
                                      struct CrowbarSimSample *out);

// Fault angle used by the run, rad.
//
// # Safety
// `trace` must be null or a live handle.
double crowbar_sim_fault_angle(const struct CrowbarSimTrace *trace);

// Simulated ∫₀ᵗ i² dt, A²s, interpolated between samples.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum CrowbarStatus crowbar_sim_joules_integral(const struct CrowbarSimTrace *trace,
                                               double t,
                                               double *out);

// Annealed copper as used for the test wire.
struct CrowbarFuseMaterial crowbar_fuse_material_copper(void);

// Melting Joules Integral of a round wire of `diameter` metres, A²s.
//
// # Safety
// `material` and `out` must be valid pointers.
enum CrowbarStatus crowbar_fuse_melting_joules_integral(double diameter,
                                                        const struct CrowbarFuseMaterial *material,
                                                        double *out);

// Energy absorbed up to melting by a round wire, J.
//
// # Safety
// `material` and `out` must be valid pointers.
enum CrowbarStatus crowbar_fuse_melting_energy(double diameter,
                                               double length,
                                               const struct CrowbarFuseMaterial *material,
                                               double *out);

// Sizes a wire for an energy target (J), a J_I ceiling (A²s) and an
// operating voltage (kV). `length` ≤ 0 picks the shortest admissible length;
// otherwise it is used as given, in metres.
//
// # Safety
// `material` and `out` must be valid pointers.
enum CrowbarStatus crowbar_fuse_design(double energy,
                                       double ji_max,
                                       double kv,
                                       double length,
                                       const struct CrowbarFuseMaterial *material,
                                       struct CrowbarFuseDesign *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROWBAR_H */
