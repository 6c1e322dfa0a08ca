#ifndef NFAR_H
#define NFAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes returned by every fallible function.
 */
typedef enum {
  NFAR_STATUS_OK = 0,
  NFAR_STATUS_NULL_POINTER = 1,
  NFAR_STATUS_INVALID_ARGUMENT = 2,
  NFAR_STATUS_SHAPE = 3,
  NFAR_STATUS_EMBEDDING = 4,
  NFAR_STATUS_OVERFLOW = 5,
  NFAR_STATUS_IO = 6,
  NFAR_STATUS_PARSE = 7,
  NFAR_STATUS_TRAINING = 8,
  NFAR_STATUS_CONFIG = 9,
  NFAR_STATUS_BUFFER_TOO_SMALL = 10,
  NFAR_STATUS_PANIC = 11,
  NFAR_STATUS_OTHER = 12,
} NfarStatus;

/*
 Nonlinearity applied pointwise inside the transition operator.
 */
typedef enum {
  NFAR_TAU_TRIG = 0,
  NFAR_TAU_IDENTITY = 1,
  NFAR_TAU_ZERO = 2,
} NfarTau;

/*
 Transition operator of the autoregression.
 */
typedef struct NfarModel NfarModel;

/*
 A learned operator with a network kernel.
 */
typedef struct NfarOperator NfarOperator;

/*
 A simulated sequence of fields.
 */
typedef struct NfarPath NfarPath;

/*
 Gaussian noise generator on an `S×S` grid.
 */
typedef struct NfarSampler NfarSampler;

typedef struct {
  size_t grid_size;
  double min_lambda;
  double max_lambda;
  double min_lambda_before_clamp;
  size_t clamp_count;
  double clamped_mass;
} NfarEmbeddingReport;

typedef struct {
  double trace;
  double lambda_max;
  double c1;
  double c2;
  double rho;
  double kappa;
  /*
   1 when `rho < 1`.
   */
  int32_t passes;
} NfarDriftReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *nfar_version(void);

/*
 Length in bytes (without the terminating NUL) of the last error message on this thread.
 */
size_t nfar_last_error_length(void);

/*
 Copies the last error message into `buf` (NUL-terminated, truncated to
 `len − 1` bytes). Returns the full message length without the NUL.

 # Safety
 `buf` must be null or point to at least `len` writable bytes.
 */
size_t nfar_last_error_message(char *buf, size_t len);

/*
 Builds the circulant spectrum for an `S×S` grid and a sampler seeded with `seed`.

 # Safety
 `out` must point to writable storage for one handle pointer.
 */
NfarStatus nfar_sampler_new(size_t grid_size,
                            double kernel_scale,
                            uint64_t seed,
                            NfarSampler **out);

/*
 Draws one noise field into `out` (`len ≥ S²`).

 # Safety
 `sampler` must be a live handle; `out` must hold `len` doubles.
 */
NfarStatus nfar_sampler_sample(NfarSampler *sampler, double *out, size_t len);

/*
 # Safety
 `sampler` must be a live handle; `out` must point to a writable report.
 */
NfarStatus nfar_sampler_report(const NfarSampler *sampler, NfarEmbeddingReport *out);

/*
 # Safety
 `sampler` must be null or a handle not yet freed.
 */
void nfar_sampler_free(NfarSampler *sampler);

/*
 Transition operator `z ↦ (1/S²) Σ amplitude·K(u−v)·τ(z(v))` on an `S×S` grid.

 # Safety
 `out` must point to writable storage for one handle pointer.
 */
NfarStatus nfar_model_new(size_t grid_size,
                          double kernel_scale,
                          double amplitude,
                          NfarTau tau,
                          NfarModel **out);

/*
 Applies the noise-free transition to `z` (`S²` values) and writes `S²` values to `out`.

 # Safety
 `model` must be a live handle; `z` must hold `z_len` doubles and `out` `out_len`.
 */
NfarStatus nfar_model_apply(const NfarModel *model,
                            const double *z,
                            size_t z_len,
                            double *out,
                            size_t out_len);

/*
 Simulates `length` fields after `burn_in` discarded steps, starting from zero.

 # Safety
 `model` must be a live handle; `out` must point to storage for one handle pointer.
 */
NfarStatus nfar_model_simulate(const NfarModel *model,
                               uint64_t seed,
                               size_t length,
                               size_t burn_in,
                               NfarPath **out);

/*
 Drift constants of the model's growth bound at its grid resolution.

 # Safety
 `model` must be a live handle; `out` must point to a writable report.
 */
NfarStatus nfar_model_check_drift(const NfarModel *model, NfarDriftReport *out);

/*
 # Safety
 `model` must be null or a handle not yet freed.
 */
void nfar_model_free(NfarModel *model);

/*
 # Safety
 `path` must be a live handle.
 */
size_t nfar_path_len(const NfarPath *path);

/*
 # Safety
 `path` must be a live handle.
 */
size_t nfar_path_grid_size(const NfarPath *path);

/*
 Copies field `t` (0-based) into `out`.

 # Safety
 `path` must be a live handle; `out` must hold `len` doubles.
 */
NfarStatus nfar_path_field(const NfarPath *path, size_t t, double *out, size_t len);

/*
 Writes CSV frames and `meta.json` into directory `dir`.

 # Safety
 `path` must be a live handle; `dir` a NUL-terminated string.
 */
NfarStatus nfar_path_write_dir(const NfarPath *path, const char *dir);

/*
 # Safety
 `dir` must be a NUL-terminated string; `out` storage for one handle pointer.
 */
NfarStatus nfar_path_read_dir(const char *dir, NfarPath **out);

/*
 # Safety
 `path` must be null or a handle not yet freed.
 */
void nfar_path_free(NfarPath *path);

/*
 Trains a kernel network on `path` with the `[train]` section of a TOML
 experiment config (`config_toml` may be null for defaults).

 # Safety
 `path` must be a live handle; `config_toml` null or NUL-terminated;
 `out` storage for one handle pointer.
 */
NfarStatus nfar_train(const NfarPath *path, const char *config_toml, NfarOperator **out);

/*
 Loads a checkpoint JSON file; `grid_size` 0 takes the size stored in the checkpoint.

 # Safety
 `file` must be NUL-terminated; `out` storage for one handle pointer.
 */
NfarStatus nfar_operator_load(const char *file, size_t grid_size, NfarOperator **out);

/*
 Saves the operator's network as checkpoint JSON.

 # Safety
 `op` must be a live handle; `file` NUL-terminated.
 */
NfarStatus nfar_operator_save(const NfarOperator *op, const char *file);

/*
 # Safety
 `op` must be a live handle.
 */
size_t nfar_operator_grid_size(const NfarOperator *op);

/*
 Applies the learned operator with full grid quadrature.

 # Safety
 `op` must be a live handle; `z` must hold `z_len` doubles and `out` `out_len`.
 */
NfarStatus nfar_operator_apply(const NfarOperator *op,
                               const double *z,
                               size_t z_len,
                               double *out,
                               size_t out_len);

/*
 # Safety
 `op` must be null or a handle not yet freed.
 */
void nfar_operator_free(NfarOperator *op);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NFAR_H */
