#ifndef DPSGD_H
#define DPSGD_H

/* Generated by cbindgen. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define DPSGD_FAMILY_GC_LINEAR 0

#define DPSGD_FAMILY_DC 1

#define DPSGD_FAMILY_TRIVIAL 2

#define DPSGD_FAMILY_FELDMAN 3

#define DPSGD_FAMILY_ALTSCHULER 4

#define DPSGD_FAMILY_KONG 5

#define DPSGD_FAMILY_COMPOSITION 6

#define DPSGD_MODE_GENERAL 0

#define DPSGD_MODE_STRENGTHENED 1

/*
 Result code of every fallible call.
 */
typedef enum DpsgdStatus {
  DPSGD_STATUS_OK = 0,
  DPSGD_STATUS_PARAMETER_ERROR = 1,
  DPSGD_STATUS_PRECONDITION_ERROR = 2,
  DPSGD_STATUS_CALIBRATION_ERROR = 3,
  DPSGD_STATUS_CONFIG_ERROR = 4,
  DPSGD_STATUS_NUMERICAL_ERROR = 5,
  DPSGD_STATUS_IO_ERROR = 6,
  DPSGD_STATUS_NULL_POINTER = 7,
  DPSGD_STATUS_PANIC = 8,
} DpsgdStatus;

/*
 Opaque mechanism configuration plus accounting options.
 */
typedef struct DpsgdMechanism DpsgdMechanism;

/*
 Opaque synthetic problem.
 */
typedef struct DpsgdProblem DpsgdProblem;

/*
 Opaque training trace.
 */
typedef struct DpsgdTrace DpsgdTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failure on this thread. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *dpsgd_last_error(void);

/*
 Creates a mechanism. Pass a negative or NaN `diameter_d` for an
 unbounded domain.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum DpsgdStatus dpsgd_mechanism_new(uint64_t n,
                                     uint64_t b,
                                     double eta,
                                     double clip_c,
                                     double diameter_d,
                                     double sigma_dp,
                                     uint64_t t_iters,
                                     double smooth_l,
                                     uintptr_t dim,
                                     struct DpsgdMechanism **out);

/*
 # Safety
 `mech` must be null or a handle from `dpsgd_mechanism_new` not yet freed.
 */
void dpsgd_mechanism_free(struct DpsgdMechanism *mech);

/*
 # Safety
 `mech` must be a live mechanism handle.
 */
enum DpsgdStatus dpsgd_mechanism_set_sigma(struct DpsgdMechanism *mech, double sigma_dp);

/*
 # Safety
 `mech` must be a live mechanism handle.
 */
enum DpsgdStatus dpsgd_mechanism_set_t(struct DpsgdMechanism *mech, uint64_t t_iters);

/*
 Sets the accounting mode (`DPSGD_MODE_*`) and noise split; a `beta`
 outside (0, 1] selects the automatic split.

 # Safety
 `mech` must be a live mechanism handle.
 */
enum DpsgdStatus dpsgd_mechanism_set_accounting(struct DpsgdMechanism *mech,
                                                int32_t mode,
                                                double beta);

/*
 Sets the baseline constants M and m and the baseline multiplier.

 # Safety
 `mech` must be a live mechanism handle.
 */
enum DpsgdStatus dpsgd_mechanism_set_baseline(struct DpsgdMechanism *mech,
                                              double lipschitz_m,
                                              double weak_convex_m,
                                              double multiplier);

/*
 RDP ε of `family` (`DPSGD_FAMILY_*`) at order `alpha`. `out_constraints_ok`
 may be null.

 # Safety
 `mech` must be a live handle; `out_eps` must be writable.
 */
enum DpsgdStatus dpsgd_bound(const struct DpsgdMechanism *mech,
                             int32_t family_code,
                             double alpha,
                             double *out_eps,
                             bool *out_constraints_ok);

/*
 Best (ε, δ)-DP over the default order grid.

 # Safety
 `mech` must be a live handle; both out-pointers must be writable.
 */
enum DpsgdStatus dpsgd_best_dp(const struct DpsgdMechanism *mech,
                               int32_t family_code,
                               double delta,
                               double *out_alpha,
                               double *out_eps_dp);

/*
 Smallest σ_DP meeting `target_eps_dp` at `delta` over the default grid.
 The handle's own σ_DP is ignored and left unchanged.

 # Safety
 `mech` must be a live handle; `out_sigma` must be writable.
 */
enum DpsgdStatus dpsgd_calibrate_sigma(const struct DpsgdMechanism *mech,
                                       int32_t family_code,
                                       double target_eps_dp,
                                       double delta,
                                       double *out_sigma);

/*
 # Safety
 `out` must be writable.
 */
enum DpsgdStatus dpsgd_rdp_to_dp(double eps_rdp, double alpha, double delta, double *out);

/*
 # Safety
 `out` must be writable.
 */
enum DpsgdStatus dpsgd_mia_epsilon(double fpr, double fnr, double delta, double *out);

/*
 Random quadratic with shared Hessian (L = 1).

 # Safety
 `out` must be writable.
 */
enum DpsgdStatus dpsgd_problem_quadratic(uintptr_t dim,
                                         uintptr_t n,
                                         uint64_t seed,
                                         double spread,
                                         struct DpsgdProblem **out);

/*
 Random ridge-regularized logistic regression.

 # Safety
 `out` must be writable.
 */
enum DpsgdStatus dpsgd_problem_logistic(uintptr_t dim,
                                        uintptr_t n,
                                        uint64_t seed,
                                        double ridge,
                                        double label_noise,
                                        struct DpsgdProblem **out);

/*
 Writes n, dim, L and μ of a problem. Any out-pointer may be null.

 # Safety
 `problem` must be a live problem handle.
 */
enum DpsgdStatus dpsgd_problem_info(const struct DpsgdProblem *problem,
                                    uintptr_t *out_n,
                                    uintptr_t *out_dim,
                                    double *out_smooth_l,
                                    double *out_strong_mu);

/*
 # Safety
 `problem` must be null or a live problem handle.
 */
void dpsgd_problem_free(struct DpsgdProblem *problem);

/*
 Runs DPSGD on `problem` with `mech` and returns the recorded trace.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum DpsgdStatus dpsgd_train(const struct DpsgdProblem *problem,
                             const struct DpsgdMechanism *mech,
                             uint64_t seed,
                             uint64_t record_every,
                             struct DpsgdTrace **out);

/*
 Number of recorded iterates; 0 for a null handle.

 # Safety
 `trace` must be null or a live trace handle.
 */
uintptr_t dpsgd_trace_len(const struct DpsgdTrace *trace);

/*
 Reads record `index`. Out-pointers may be null.

 # Safety
 `trace` must be a live trace handle.
 */
enum DpsgdStatus dpsgd_trace_record(const struct DpsgdTrace *trace,
                                    uintptr_t index,
                                    uint64_t *out_t,
                                    double *out_loss_gap,
                                    double *out_grad_norm,
                                    double *out_clip_fraction,
                                    bool *out_projected);

/*
 Copies the iterate of record `index` into `buf`, which must hold `len`
 doubles with `len` equal to the model dimension.

 # Safety
 `trace` must be a live handle and `buf` valid for `len` writes.
 */
enum DpsgdStatus dpsgd_trace_theta(const struct DpsgdTrace *trace,
                                   uintptr_t index,
                                   double *buf,
                                   uintptr_t len);

/*
 # Safety
 `trace` must be null or a live trace handle.
 */
void dpsgd_trace_free(struct DpsgdTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPSGD_H */
