#ifndef GEOSTACK_H
#define GEOSTACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_POINTER = 1,
  GS_STATUS_INVALID_ARGUMENT = 2,
  GS_STATUS_INVALID_DATA = 3,
  GS_STATUS_DIMENSION_MISMATCH = 4,
  GS_STATUS_FINGERPRINT_MISMATCH = 5,
  GS_STATUS_IO = 6,
  GS_STATUS_PANIC = 7,
} GsStatus;

// Role a corpus plays; decides whether coordinates are required.
typedef enum GsRole {
  GS_ROLE_TRAIN = 0,
  GS_ROLE_DEV = 1,
  GS_ROLE_TEST = 2,
} GsRole;

typedef struct GsCorpus GsCorpus;

typedef struct GsKernel GsKernel;

typedef struct GsStacking GsStacking;

// A fitted string-kernel ν-SVR pair (latitude and longitude).
typedef struct GsSvr GsSvr;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next `gs_*` call on the same thread.
const char *gs_last_error(void);

// Library version as a static string.
const char *gs_version(void);

// Great-circle distance in kilometres between two points in degrees.
//
// # Safety
// `out_km` must be NULL or point to writable memory for one double.
enum GsStatus gs_haversine_km(double lat1, double lon1, double lat2, double lon2, double *out_km);

// Parses corpus text (`lat<TAB>lon<TAB>text` lines).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum GsStatus gs_corpus_parse(const char *text, enum GsRole role, struct GsCorpus **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum GsStatus gs_corpus_load(const char *path, enum GsRole role, struct GsCorpus **out);

// Number of posts, or 0 for NULL.
//
// # Safety
// `corpus` must be NULL or a live handle.
size_t gs_corpus_len(const struct GsCorpus *corpus);

// # Safety
// `corpus` must be NULL or a handle not yet freed.
void gs_corpus_free(struct GsCorpus *corpus);

// Gram matrix of `corpus` with itself.
//
// # Safety
// `corpus` must be a live handle; `out` must be writable.
enum GsStatus gs_kernel_gram(const struct GsCorpus *corpus,
                             size_t min_n,
                             size_t max_n,
                             bool normalize,
                             struct GsKernel **out);

// Cross matrix with one row per `test` post and one column per `train` post.
//
// # Safety
// `test` and `train` must be live handles; `out` must be writable.
enum GsStatus gs_kernel_cross(const struct GsCorpus *test,
                              const struct GsCorpus *train,
                              size_t min_n,
                              size_t max_n,
                              bool normalize,
                              struct GsKernel **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum GsStatus gs_kernel_load(const char *path, struct GsKernel **out);

// # Safety
// `kernel` must be a live handle; `path` a NUL-terminated string.
enum GsStatus gs_kernel_save(const struct GsKernel *kernel, const char *path);

// # Safety
// `kernel` must be NULL or a live handle.
size_t gs_kernel_rows(const struct GsKernel *kernel);

// # Safety
// `kernel` must be NULL or a live handle.
size_t gs_kernel_cols(const struct GsKernel *kernel);

// Copies the row-major values into `out`, which must hold `rows * cols`
// doubles.
//
// # Safety
// `kernel` must be a live handle; `out` must have room for `len` doubles.
enum GsStatus gs_kernel_values(const struct GsKernel *kernel, double *out, size_t len);

// # Safety
// `kernel` must be NULL or a handle not yet freed.
void gs_kernel_free(struct GsKernel *kernel);

// Fits one ν-SVR per coordinate on a labeled corpus.
//
// # Safety
// `train` must be a live handle; `out` must be writable.
enum GsStatus gs_svr_fit(const struct GsCorpus *train,
                         size_t min_n,
                         size_t max_n,
                         bool normalize,
                         double c,
                         double nu,
                         struct GsSvr **out);

// Whether both coordinate models met the KKT tolerance.
//
// # Safety
// `svr` must be NULL or a live handle.
bool gs_svr_converged(const struct GsSvr *svr);

// Predicts every post of `corpus` into `out_lat` and `out_lon`, each of
// `len == gs_corpus_len(corpus)` doubles.
//
// # Safety
// Handles must be live; both buffers must have room for `len` doubles.
enum GsStatus gs_svr_predict(const struct GsSvr *svr,
                             const struct GsCorpus *corpus,
                             double *out_lat,
                             double *out_lon,
                             size_t len);

// # Safety
// `svr` must be NULL or a handle not yet freed.
void gs_svr_free(struct GsSvr *svr);

// Loads a stacking model written by `geostack ensemble train`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum GsStatus gs_stacking_load(const char *path, struct GsStacking **out);

// Number of base models the booster was trained on.
//
// # Safety
// `model` must be NULL or a live handle.
size_t gs_stacking_base_models(const struct GsStacking *model);

// Combines base-model prediction files (one per base model, any order) into
// ensemble coordinates for every post of `corpus`.
//
// # Safety
// Handles must be live; `pred_paths` must hold `n_paths` NUL-terminated
// strings; both buffers must have room for `len` doubles.
enum GsStatus gs_stacking_predict(const struct GsStacking *model,
                                  const struct GsCorpus *corpus,
                                  const char *const *pred_paths,
                                  size_t n_paths,
                                  double *out_lat,
                                  double *out_lon,
                                  size_t len);

// # Safety
// `model` must be NULL or a handle not yet freed.
void gs_stacking_free(struct GsStacking *model);

// Median great-circle error in km of predicted coordinates against the
// labels of `truth`, with predictions given in corpus order.
//
// # Safety
// `truth` must be a live handle; `lat` and `lon` must hold `len` doubles.
enum GsStatus gs_median_error_km(const struct GsCorpus *truth,
                                 const double *lat,
                                 const double *lon,
                                 size_t len,
                                 double *out_km);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOSTACK_H */
