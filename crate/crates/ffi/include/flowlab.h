#ifndef FLOWLAB_H
#define FLOWLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlowlabActivation {
  FLOWLAB_ACTIVATION_ASINH = 0,
  FLOWLAB_ACTIVATION_SOFTPLUS = 1,
} FlowlabActivation;

// Result of every fallible call.
typedef enum FlowlabStatus {
  FLOWLAB_STATUS_OK = 0,
  // Bad argument, shape mismatch, or null pointer.
  FLOWLAB_STATUS_INVALID_ARGUMENT = 1,
  // Singular Jacobian, overflow, divergence, or other numeric failure.
  FLOWLAB_STATUS_NUMERIC = 2,
  // File could not be read, written, or parsed.
  FLOWLAB_STATUS_IO = 3,
  // A Rust panic was caught at the boundary.
  FLOWLAB_STATUS_INTERNAL = 4,
} FlowlabStatus;

// Opaque model handle.
typedef struct FlowlabModel FlowlabModel;

// Training hyperparameters. Obtain defaults from
// `flowlab_train_config_default`.
typedef struct FlowlabTrainConfig {
  double alpha;
  uintptr_t batch_size;
  double learning_rate;
  uintptr_t epochs;
  uint64_t seed;
  // Singular values outside [1/b, b] abort training; 0 disables.
  double divergence_bound;
  uintptr_t monitor_samples;
} FlowlabTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or null. The
// pointer stays valid until the next failing call on the same thread.
const char *flowlab_last_error(void);

// Library version as a static NUL-terminated string.
const char *flowlab_version(void);

struct FlowlabTrainConfig flowlab_train_config_default(void);

// New dense flow with `hidden_layers` hidden layers, orthogonal weights
// drawn from `seed`, and zero biases.
//
// # Safety
// `out` must be a valid pointer to write a handle to.
enum FlowlabStatus flowlab_model_new_dense(uintptr_t dim,
                                           uintptr_t hidden_layers,
                                           enum FlowlabActivation activation,
                                           uint64_t seed,
                                           struct FlowlabModel **out);

// Loads a v1 checkpoint (dense or coupling model).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum FlowlabStatus flowlab_model_load(const char *path, struct FlowlabModel **out);

// # Safety
// `model` must come from this library; `path` must be NUL-terminated.
enum FlowlabStatus flowlab_model_save(const struct FlowlabModel *model, const char *path);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void flowlab_model_free(struct FlowlabModel *model);

// Input dimension, or 0 for a null handle.
//
// # Safety
// `model` must be null or come from this library.
uintptr_t flowlab_model_dim(const struct FlowlabModel *model);

// `out[i] = f(x[i])` for `n` rows.
//
// # Safety
// `x` and `out` must hold `n * dim` doubles.
enum FlowlabStatus flowlab_model_forward(const struct FlowlabModel *model,
                                         const double *x,
                                         uintptr_t n,
                                         double *out);

// `out[i] = f⁻¹(y[i])` for `n` rows.
//
// # Safety
// `y` and `out` must hold `n * dim` doubles.
enum FlowlabStatus flowlab_model_inverse(const struct FlowlabModel *model,
                                         const double *y,
                                         uintptr_t n,
                                         double *out);

// Per-sample log-likelihoods (optional, `n` entries) and their mean.
//
// # Safety
// `x` must hold `n * dim` doubles; `per_sample` null or `n` doubles;
// `mean` null or one double.
enum FlowlabStatus flowlab_model_log_likelihood(const struct FlowlabModel *model,
                                                const double *x,
                                                uintptr_t n,
                                                double *per_sample,
                                                double *mean);

// Un-whitened components of each row: the first `k` entries of `ŷ` go to
// `y_hat` (`n * k`), their local variances to `variances` (`n * k`,
// optional), both in descending-variance order.
//
// # Safety
// Buffers must have the sizes stated above.
enum FlowlabStatus flowlab_model_project(const struct FlowlabModel *model,
                                         const double *x,
                                         uintptr_t n,
                                         uintptr_t k,
                                         double *y_hat,
                                         double *variances);

// Trains a model in place on `n` rows (no validation split). Writes the
// final epoch's mean training log-likelihood to `final_ll` when non-null.
// On failure the model is left unchanged.
//
// # Safety
// `data` must hold `n * dim` doubles; `config` must be valid.
enum FlowlabStatus flowlab_model_train(struct FlowlabModel *model,
                                       const double *data,
                                       uintptr_t n,
                                       const struct FlowlabTrainConfig *config,
                                       double *final_ll);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWLAB_H */
