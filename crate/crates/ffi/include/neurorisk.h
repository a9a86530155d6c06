#ifndef NEURORISK_H
#define NEURORISK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum NrStatus {
  NR_STATUS_OK = 0,
  /*
   Null pointer, bad length or invalid UTF-8.
   */
  NR_STATUS_INVALID_ARGUMENT = 1,
  NR_STATUS_INVALID_PARAMETER = 2,
  NR_STATUS_SHAPE = 3,
  NR_STATUS_NOT_SPD = 4,
  NR_STATUS_DEGENERATE = 5,
  NR_STATUS_NO_CONVERGENCE = 6,
  NR_STATUS_NON_FINITE = 7,
  NR_STATUS_PARSE = 8,
  NR_STATUS_IO = 9,
  NR_STATUS_CONFIG = 10,
  /*
   A Rust panic was caught at the boundary.
   */
  NR_STATUS_INTERNAL = 99,
} NrStatus;

/*
 Region graph.
 */
typedef struct NrGraph NrGraph;

/*
 Symmetric positive definite matrix.
 */
typedef struct NrSpd NrSpd;

/*
 Risk trajectory produced by `nr_diffuse`.
 */
typedef struct NrTrajectory NrTrajectory;

/*
 Binary classification metrics at a threshold.
 */
typedef struct NrMetrics {
  double acc;
  double auc;
  double f1;
  double precision;
  double recall;
  size_t true_pos;
  size_t false_pos;
  size_t false_neg;
  size_t true_neg;
} NrMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 Valid until the next call on the same thread.
 */
const char *nr_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *nr_version(void);

/*
 Copies an `n x n` row-major matrix into a new SPD handle.
 */
enum NrStatus nr_spd_new(const double *data, size_t n, struct NrSpd **result);

void nr_spd_free(struct NrSpd *h);

/*
 Dimension of the matrix, or 0 for a null handle.
 */
size_t nr_spd_dim(const struct NrSpd *h);

/*
 Writes the matrix row-major into `dst`, which must hold `dim * dim` values.
 */
enum NrStatus nr_spd_copy(const struct NrSpd *h, double *dst, size_t len);

/*
 Affine-invariant geodesic distance.
 */
enum NrStatus nr_geodesic_distance(const struct NrSpd *a, const struct NrSpd *b, double *result);

/*
 Fréchet (Karcher) mean of `count` matrices into a new handle.
 */
enum NrStatus nr_frechet_mean(const struct NrSpd *const *points,
                              size_t count,
                              double tol,
                              size_t max_iter,
                              struct NrSpd **result);

/*
 `E_α(z)` for real `z`.
 */
enum NrStatus nr_mittag_leffler(double alpha, double z, double *result);

/*
 Caputo derivative of order `alpha` of `n` samples spaced `h` apart;
 `dst` receives `n` values.
 */
enum NrStatus nr_caputo_uniform(const double *values,
                                size_t n,
                                double h,
                                double alpha,
                                double *dst);

/*
 DFA exponent of a series; `super_diffusive` (optional) is set to 1 when
 the exponent is at least 1.
 */
enum NrStatus nr_memory_index(const double *series,
                              size_t n,
                              double *exponent,
                              int32_t *super_diffusive);

/*
 Mean row entropy of a `rows x cols` row-major attention weight matrix.
 */
enum NrStatus nr_attention_entropy(const double *weights, size_t rows, size_t cols, double *result);

/*
 Metrics for `n` scores against 0/1 labels.
 */
enum NrStatus nr_metrics(const double *scores,
                         const uint8_t *labels,
                         size_t n,
                         double threshold,
                         struct NrMetrics *result);

/*
 The bundled 16-region graph.
 */
enum NrStatus nr_graph_default(struct NrGraph **result);

/*
 Graph from JSON text `{"labels": [...], "adjacency": [[...], ...]}`.
 */
enum NrStatus nr_graph_from_json(const char *json, struct NrGraph **result);

void nr_graph_free(struct NrGraph *h);

/*
 Number of regions, or 0 for a null handle.
 */
size_t nr_graph_regions(const struct NrGraph *h);

/*
 Index of the region labelled `label`.
 */
enum NrStatus nr_graph_region_index(const struct NrGraph *h, const char *label, size_t *result);

/*
 Fractional risk diffusion from unit risk in `seed_region`.
 */
enum NrStatus nr_diffuse(const struct NrGraph *graph,
                         double alpha,
                         double beta,
                         double gamma,
                         size_t seed_region,
                         double horizon,
                         double step,
                         struct NrTrajectory **result);

void nr_trajectory_free(struct NrTrajectory *h);

/*
 Number of stored states, or 0 for a null handle.
 */
size_t nr_trajectory_len(const struct NrTrajectory *h);

/*
 Copies state `index` into `x` (`regions` values) and its time into `t`.
 */
enum NrStatus nr_trajectory_state(const struct NrTrajectory *h,
                                  size_t index,
                                  double *t,
                                  double *x,
                                  size_t regions);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEURORISK_H */
