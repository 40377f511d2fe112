#ifndef LABELPROP_H
#define LABELPROP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LpKind {
  LP_KIND_INTENSITY = 0,
  LP_KIND_LABEL = 1,
  LP_KIND_MASK = 2,
  LP_KIND_PROBABILITY = 3,
} LpKind;

typedef enum LpPolicy {
  LP_POLICY_NEAREST_SEED = 0,
  LP_POLICY_BACKGROUND = 1,
  LP_POLICY_ERROR = 2,
} LpPolicy;

typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_INVALID_ARGUMENT = 2,
  LP_STATUS_IO = 3,
  LP_STATUS_FORMAT = 4,
  LP_STATUS_VALIDATION = 5,
  LP_STATUS_NUMERICAL = 6,
  LP_STATUS_PANIC = 7,
} LpStatus;

typedef struct LpAnnotation LpAnnotation;

typedef struct LpLabelSet LpLabelSet;

typedef struct LpResult LpResult;

typedef struct LpVolume LpVolume;

typedef struct LpPropagateOptions {
  double beta;
  double rel_tol;
  /**
   * 0 selects the default limit.
   */
  size_t max_iters;
  enum LpPolicy policy;
} LpPropagateOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next `lp_*` call on the thread.
 */
const char *lp_last_error_message(void);

const char *lp_version(void);

void lp_string_free(char *s);

enum LpStatus lp_volume_read(const char *path, enum LpKind kind, struct LpVolume **out);

enum LpStatus lp_volume_write(const struct LpVolume *vol, const char *path);

/**
 * `spacing` may be null for unit spacing. `data` holds `dims[0]*dims[1]*dims[2]`
 * values with x fastest.
 */
enum LpStatus lp_volume_from_f64(const size_t *dims,
                                 const double *spacing,
                                 const double *data,
                                 size_t len,
                                 bool probability,
                                 struct LpVolume **out);

enum LpStatus lp_volume_from_labels(const size_t *dims,
                                    const double *spacing,
                                    const uint16_t *data,
                                    size_t len,
                                    struct LpVolume **out);

/**
 * Nonzero bytes are inside the mask.
 */
enum LpStatus lp_volume_from_mask(const size_t *dims,
                                  const double *spacing,
                                  const uint8_t *data,
                                  size_t len,
                                  struct LpVolume **out);

void lp_volume_free(struct LpVolume *vol);

enum LpStatus lp_volume_kind(const struct LpVolume *vol, enum LpKind *out);

/**
 * Writes the three dimensions to `dims_out`.
 */
enum LpStatus lp_volume_dims(const struct LpVolume *vol, size_t *dims_out);

/**
 * Copies voxel values, converted to double, into `buf` of length `len`
 * (which must equal the voxel count).
 */
enum LpStatus lp_volume_copy_f64(const struct LpVolume *vol, double *buf, size_t len);

enum LpStatus lp_labelset_parse(const char *text, struct LpLabelSet **out);

enum LpStatus lp_labelset_read(const char *path, struct LpLabelSet **out);

enum LpStatus lp_labelset_len(const struct LpLabelSet *set, size_t *out);

void lp_labelset_free(struct LpLabelSet *set);

/**
 * One mask volume per label of `labels`, in label order.
 */
enum LpStatus lp_annotation_from_masks(const struct LpLabelSet *labels,
                                       const struct LpVolume *const *masks,
                                       size_t n_masks,
                                       struct LpAnnotation **out);

/**
 * One NIfTI mask path per label of `labels`, in label order.
 */
enum LpStatus lp_annotation_read(const char *const *paths,
                                 size_t n_paths,
                                 const struct LpLabelSet *labels,
                                 struct LpAnnotation **out);

void lp_annotation_free(struct LpAnnotation *a);

struct LpPropagateOptions lp_propagate_options_default(void);

/**
 * `options` may be null for the defaults.
 */
enum LpStatus lp_propagate(const struct LpVolume *guidance,
                           const struct LpVolume *roi,
                           const struct LpAnnotation *annotation,
                           const struct LpPropagateOptions *options,
                           struct LpResult **out);

void lp_result_free(struct LpResult *r);

/**
 * New label volume holding the hard labels; free with `lp_volume_free`.
 */
enum LpStatus lp_result_hard(const struct LpResult *r, struct LpVolume **out);

/**
 * New probability volume for the `label_index`-th label of the set.
 */
enum LpStatus lp_result_soft(const struct LpResult *r, size_t label_index, struct LpVolume **out);

/**
 * Propagation report as JSON; free with `lp_string_free`.
 */
enum LpStatus lp_result_report_json(const struct LpResult *r, char **out);

enum LpStatus lp_majority_vote(const struct LpVolume *const *maps,
                               size_t n_maps,
                               const struct LpVolume *roi,
                               struct LpVolume **out);

/**
 * Volume-weighted Dice of `pred` against `target` over `roi`. When
 * `annotation` is non-null its ambiguous voxels are excluded. Either output
 * may be null.
 */
enum LpStatus lp_dice_report(const struct LpVolume *pred,
                             const struct LpVolume *target,
                             const struct LpLabelSet *labels,
                             const struct LpVolume *roi,
                             const struct LpAnnotation *annotation,
                             double *overall_out,
                             char **json_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LABELPROP_H */
