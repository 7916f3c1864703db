#ifndef NCLABEL_H
#define NCLABEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Measure identifiers accepted where a function takes `int32_t measure`.
typedef enum NclMeasure {
  NCL_MEASURE_H_MEAN = 0,
  NCL_MEASURE_Q_MEAN = 1,
  NCL_MEASURE_G_MEAN = 2,
  NCL_MEASURE_MICRO_F1 = 3,
} NclMeasure;

// Result of every fallible call.
typedef enum NclStatus {
  NCL_STATUS_OK = 0,
  NCL_STATUS_NULL_POINTER = 1,
  NCL_STATUS_INVALID_ARGUMENT = 2,
  NCL_STATUS_SHAPE_MISMATCH = 3,
  NCL_STATUS_SINGULAR_MATRIX = 4,
  NCL_STATUS_NON_POSITIVE_DENOMINATOR = 5,
  NCL_STATUS_IO = 6,
  NCL_STATUS_PARSE = 7,
  NCL_STATUS_PANIC = 8,
} NclStatus;

// Trained (possibly randomized) classifier.
typedef struct NclClassifier NclClassifier;

// Features with labels.
typedef struct NclDataset NclDataset;

// Class-conditional noise channel, `T[i][j] = P(noisy i | clean j)`.
typedef struct NclNoise NclNoise;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (truncated and
// NUL-terminated) and returns its full length in bytes, excluding the NUL.
// Pass a null `buf` to query the length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t ncl_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *ncl_version(void);

// Symmetric channel: `1 - sigma` on the diagonal, `sigma/(n-1)` elsewhere.
//
// # Safety
// `out` must be a valid pointer.
enum NclStatus ncl_noise_uniform(size_t n, double sigma, struct NclNoise **out);

// Channel with `1 - sigma` on the diagonal and random off-diagonal columns.
//
// # Safety
// `out` must be a valid pointer.
enum NclStatus ncl_noise_random_column(size_t n,
                                       double sigma,
                                       uint64_t seed,
                                       struct NclNoise **out);

// Channel from an explicit column-stochastic `n`×`n` matrix.
//
// # Safety
// `t` must point to `n*n` doubles and `out` must be valid.
enum NclStatus ncl_noise_from_matrix(size_t n, const double *t, struct NclNoise **out);

// # Safety
// `noise` must be null or a handle not yet freed.
void ncl_noise_free(struct NclNoise *noise);

// Number of classes, or 0 for a null handle.
//
// # Safety
// `noise` must be null or a live handle.
size_t ncl_noise_n(const struct NclNoise *noise);

// `‖T⁻¹‖₁`, the maximum absolute column sum of the inverse.
//
// # Safety
// `noise` must be a live handle and `out` valid.
enum NclStatus ncl_noise_one_norm_of_inv(const struct NclNoise *noise, double *out);

// Writes `T⁻¹` (`n*n` doubles).
//
// # Safety
// `noise` must be a live handle and `out` point to `n*n` doubles.
enum NclStatus ncl_noise_inverse(const struct NclNoise *noise, double *out);

// Clean class probabilities `T⁻¹p` from noisy ones (`n` doubles each).
//
// # Safety
// `p` and `out` must point to `n` doubles.
enum NclStatus ncl_noise_correct_probs(const struct NclNoise *noise, const double *p, double *out);

// Loss matrix `(Tᵀ)⁻¹L` whose expected value on noisy labels equals that of
// `L` on clean ones.
//
// # Safety
// `loss` and `out` must point to `n*n` doubles.
enum NclStatus ncl_noise_correct_loss(const struct NclNoise *noise,
                                      const double *loss,
                                      double *out);

// Clean confusion `T⁻¹C` from a noisy one.
//
// # Safety
// `confusion` and `out` must point to `n*n` doubles.
enum NclStatus ncl_noise_correct_confusion(const struct NclNoise *noise,
                                           const double *confusion,
                                           double *out);

// Loss of an `n`×`n` confusion matrix (rows true class, columns predicted)
// under one of the [`NclMeasure`] values.
//
// # Safety
// `confusion` must point to `n*n` doubles and `out` be valid.
enum NclStatus ncl_measure_evaluate(int32_t measure,
                                    size_t n,
                                    const double *confusion,
                                    double *out);

// Loss of the clean confusion estimated from a noisy one.
//
// # Safety
// `noisy_confusion` must point to `n*n` doubles and `out` be valid.
enum NclStatus ncl_measure_evaluate_corrected(int32_t measure,
                                              const struct NclNoise *noise,
                                              const double *noisy_confusion,
                                              double *out);

// Dataset from `rows`×`dim` features and 0-based labels below `n_classes`.
//
// # Safety
// `features` must point to `rows*dim` doubles, `labels` to `rows` values.
enum NclStatus ncl_dataset_new(size_t rows,
                               size_t dim,
                               const double *features,
                               const size_t *labels,
                               size_t n_classes,
                               struct NclDataset **out);

// Loads a CSV with a header row and 1-based labels in `label_column`
// (`"label"` when null).
//
// # Safety
// `path` and `label_column` must be null or NUL-terminated strings.
enum NclStatus ncl_dataset_load_csv(const char *path,
                                    const char *label_column,
                                    struct NclDataset **out);

// # Safety
// `dataset` must be null or a handle not yet freed.
void ncl_dataset_free(struct NclDataset *dataset);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t ncl_dataset_len(const struct NclDataset *dataset);

// Feature dimension, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t ncl_dataset_dim(const struct NclDataset *dataset);

// Noise-corrected Frank-Wolfe for H-mean, Q-mean or G-mean on a sample
// with noisy labels. `steps == 0` selects the default.
//
// # Safety
// `dataset` and `noise` must be live handles and `out` valid.
enum NclStatus ncl_train_ncfw(int32_t measure,
                              const struct NclDataset *dataset,
                              const struct NclNoise *noise,
                              size_t steps,
                              uint64_t seed,
                              struct NclClassifier **out);

// Noise-corrected bisection for Micro F1 on a sample with noisy labels.
// `steps == 0` selects the default.
//
// # Safety
// `dataset` and `noise` must be live handles and `out` valid.
enum NclStatus ncl_train_ncbs(const struct NclDataset *dataset,
                              const struct NclNoise *noise,
                              size_t steps,
                              uint64_t seed,
                              struct NclClassifier **out);

// Plug-in classifier `argmax T⁻¹η̂(x)` on a sample with noisy labels.
//
// # Safety
// `dataset` and `noise` must be live handles and `out` valid.
enum NclStatus ncl_train_plugin(const struct NclDataset *dataset,
                                const struct NclNoise *noise,
                                uint64_t seed,
                                struct NclClassifier **out);

// # Safety
// `classifier` must be null or a handle not yet freed.
void ncl_classifier_free(struct NclClassifier *classifier);

// Number of classes, or 0 for a null handle.
//
// # Safety
// `classifier` must be null or a live handle.
size_t ncl_classifier_n_classes(const struct NclClassifier *classifier);

// Distribution over predicted labels at `x` (`dim` doubles); writes
// `n_classes` doubles.
//
// # Safety
// `x` must point to `dim` doubles and `out` to `n_classes` doubles.
enum NclStatus ncl_classifier_predict_distribution(const struct NclClassifier *classifier,
                                                   const double *x,
                                                   size_t dim,
                                                   double *out);

// Expected confusion of the classifier on a labelled sample
// (`n_classes*n_classes` doubles).
//
// # Safety
// `dataset` must be a live handle and `out` point to `n*n` doubles.
enum NclStatus ncl_classifier_confusion(const struct NclClassifier *classifier,
                                        const struct NclDataset *dataset,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NCLABEL_H */
