#ifndef HUBRANK_H
#define HUBRANK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum HubrankStatus {
  HUBRANK_STATUS_OK = 0,
  HUBRANK_STATUS_NULL_POINTER = 1,
  HUBRANK_STATUS_INVALID_INPUT = 2,
  HUBRANK_STATUS_FORMAT = 3,
  HUBRANK_STATUS_IO = 4,
  HUBRANK_STATUS_DEGENERATE = 5,
  HUBRANK_STATUS_NO_SIGNAL = 6,
  HUBRANK_STATUS_NUMERICAL = 7,
  HUBRANK_STATUS_HASH_MISMATCH = 8,
  HUBRANK_STATUS_PANIC = 9,
} HubrankStatus;

typedef enum HubrankBackend {
  HUBRANK_BACKEND_NAIVE = 0,
  HUBRANK_BACKEND_SVD_OPTIMIZED = 1,
  HUBRANK_BACKEND_FIXED_POINT = 2,
} HubrankBackend;

// An `n × d` feature matrix.
typedef struct HubrankFeatures HubrankFeatures;

// A posterior predictive head.
typedef struct HubrankHead HubrankHead;

// A LogME result together with the factors needed to build a head.
typedef struct HubrankReport HubrankReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static nul-terminated string.
const char *hubrank_version(void);

// Copies the last error message of this thread into `buf` (truncated and
// always nul-terminated when `len > 0`). Returns the full message length
// excluding the terminator, or 0 if there is none.
size_t hubrank_last_error_message(char *buf, size_t len);

// Builds an `n × d` matrix from row-major `data`.
enum HubrankStatus hubrank_features_new(const double *data,
                                        size_t n,
                                        size_t d,
                                        struct HubrankFeatures **out);

// Reads a PTMF feature file.
enum HubrankStatus hubrank_features_read(const char *file, struct HubrankFeatures **out);

enum HubrankStatus hubrank_features_shape(const struct HubrankFeatures *features,
                                          size_t *n,
                                          size_t *d);

void hubrank_features_free(struct HubrankFeatures *features);

// LogME for class indices `labels[0..n]` in `0..num_classes`.
enum HubrankStatus hubrank_logme_classification(const struct HubrankFeatures *features,
                                                const size_t *labels,
                                                size_t n,
                                                size_t num_classes,
                                                enum HubrankBackend backend,
                                                bool append_bias,
                                                struct HubrankReport **out);

// LogME for real targets given row-major as `n × k`.
enum HubrankStatus hubrank_logme_regression(const struct HubrankFeatures *features,
                                            const double *targets,
                                            size_t n,
                                            size_t k,
                                            enum HubrankBackend backend,
                                            bool append_bias,
                                            struct HubrankReport **out);

enum HubrankStatus hubrank_report_logme(const struct HubrankReport *report, double *value);

// Number of label dimensions that were scored.
enum HubrankStatus hubrank_report_dimension_count(const struct HubrankReport *report,
                                                  size_t *count);

// Details of the `index`-th scored dimension.
enum HubrankStatus hubrank_report_dimension(const struct HubrankReport *report,
                                            size_t index,
                                            size_t *dimension,
                                            double *alpha,
                                            double *beta,
                                            double *normalized_evidence);

void hubrank_report_free(struct HubrankReport *report);

enum HubrankStatus hubrank_kendall_tau(const double *scores,
                                       const double *truths,
                                       size_t m,
                                       bool lower_better,
                                       double *tau);

// Hyperbolically weighted τ.
enum HubrankStatus hubrank_weighted_tau(const double *scores,
                                        const double *truths,
                                        size_t m,
                                        bool lower_better,
                                        double *tau);

// Builds a predictive head from `report`; `features` are the matrix the
// report was computed on and only supply the stored content hash.
enum HubrankStatus hubrank_head_from_report(const struct HubrankReport *report,
                                            const struct HubrankFeatures *features,
                                            const char *model_id,
                                            size_t num_dimensions,
                                            struct HubrankHead **out);

enum HubrankStatus hubrank_head_read(const char *file, struct HubrankHead **out);

enum HubrankStatus hubrank_head_write(const struct HubrankHead *head, const char *file);

// Predictive mean and variance for label dimension `dimension` at the raw
// feature vector `f[0..len]`.
enum HubrankStatus hubrank_head_predict(const struct HubrankHead *head,
                                        size_t dimension,
                                        const double *f,
                                        size_t len,
                                        double *mean,
                                        double *variance);

void hubrank_head_free(struct HubrankHead *head);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HUBRANK_H */
