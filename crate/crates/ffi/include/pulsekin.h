#ifndef PULSEKIN_H
#define PULSEKIN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PK_METHOD_GREEN 0

#define PK_METHOD_OMIT 1

#define PK_METHOD_CHROM 2

#define PK_METHOD_LGI 3

#define PK_METHOD_POS 4

/**
 * A trained siamese network loaded from a checkpoint.
 */
typedef struct PkModel PkModel;

/**
 * A preprocessed rPPG signal, channels × length, row-major.
 */
typedef struct PkSignal PkSignal;

/**
 * A validated RGB trace.
 */
typedef struct PkTrace PkTrace;

typedef int32_t PkStatus;

#define PK_OK 0

#define PK_ERR_FORMAT 1

#define PK_ERR_DATA 2

#define PK_ERR_DURATION 3

#define PK_ERR_DEGENERATE 4

#define PK_ERR_BAND 5

#define PK_ERR_INDEX 6

#define PK_ERR_WINDOW 7

#define PK_ERR_EXTRACTION 8

#define PK_ERR_SHAPE 9

#define PK_ERR_CONFIG 10

#define PK_ERR_GRAD 11

#define PK_ERR_INSUFFICIENT 12

#define PK_ERR_TRAINING 13

#define PK_ERR_CLASS 14

#define PK_ERR_IO 15

/**
 * A null pointer or invalid UTF-8 argument.
 */
#define PK_ERR_ARGUMENT 100

/**
 * A panic was caught at the boundary.
 */
#define PK_ERR_INTERNAL 101

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *pk_last_error_message(void);

/**
 * Reads and validates a trace file. Traces shorter than `min_seconds` are
 * rejected with `PK_ERR_DURATION`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
PkStatus pk_trace_load(const char *path, double min_seconds, struct PkTrace **out);

/**
 * # Safety
 * `trace` must come from [`pk_trace_load`] or be null.
 */
void pk_trace_free(struct PkTrace *trace);

/**
 * # Safety
 * `trace` must be a live handle; the out-pointers must be valid.
 */
PkStatus pk_trace_info(const struct PkTrace *trace, size_t *frames, size_t *rois, double *fps);

/**
 * Extracts a preprocessed rPPG signal with default settings: one channel per
 * ROI, or a single channel from the ROI average when `single_channel` is
 * nonzero.
 *
 * # Safety
 * `trace` must be a live handle and `out` a valid pointer.
 */
PkStatus pk_extract(const struct PkTrace *trace,
                    int32_t method_code,
                    int32_t single_channel,
                    struct PkSignal **out);

/**
 * Reads an rPPG signal file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
PkStatus pk_signal_load(const char *path, struct PkSignal **out);

/**
 * # Safety
 * `signal` must be a live handle; the out-pointers must be valid.
 */
PkStatus pk_signal_dims(const struct PkSignal *signal, size_t *channels, size_t *length);

/**
 * Borrowed view of the samples, valid while the handle lives. Null for a
 * null handle.
 *
 * # Safety
 * `signal` must be a live handle or null.
 */
const double *pk_signal_data(const struct PkSignal *signal);

/**
 * # Safety
 * `signal` must come from this library or be null.
 */
void pk_signal_free(struct PkSignal *signal);

/**
 * Heart rate in beats per minute from the Welch spectrum of `x`.
 *
 * # Safety
 * `x` must point to `n` readable doubles and `bpm` must be valid.
 */
PkStatus pk_estimate_hr(const double *x, size_t n, double fps, double *bpm);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
PkStatus pk_model_load(const char *path, struct PkModel **out);

/**
 * # Safety
 * `model` must come from [`pk_model_load`] or be null.
 */
void pk_model_free(struct PkModel *model);

/**
 * Embedding distance between two signals; smaller means more likely kin.
 *
 * # Safety
 * All handles must be live and `distance` valid.
 */
PkStatus pk_model_distance(const struct PkModel *model,
                           const struct PkSignal *a,
                           const struct PkSignal *b,
                           double *distance);

/**
 * ROC AUC of distances against kin labels (nonzero = kin), with ties
 * counted as half.
 *
 * # Safety
 * `distances` and `kin` must each point to `n` readable elements.
 */
PkStatus pk_auc(const double *distances, const uint8_t *kin, size_t n, double *auc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PULSEKIN_H */
