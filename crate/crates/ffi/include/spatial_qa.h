#ifndef SPATIAL_QA_H
#define SPATIAL_QA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SqStatus {
  SQ_STATUS_OK = 0,
  SQ_STATUS_NULL_POINTER = 1,
  SQ_STATUS_INVALID_UTF8 = 2,
  SQ_STATUS_SCHEMA = 3,
  SQ_STATUS_INVARIANT = 4,
  SQ_STATUS_IO = 5,
  SQ_STATUS_CONFIG = 6,
  SQ_STATUS_INVALID_ARGUMENT = 7,
  SQ_STATUS_PANIC = 8,
} SqStatus;

// Emitted QA items from one generation run.
typedef struct SqQaSet SqQaSet;

// A validated scene.
typedef struct SqScene SqScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *sq_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *sq_version(void);

// Loads and validates a scene file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum SqStatus sq_scene_load(const char *path, struct SqScene **out);

// Parses and validates a scene from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum SqStatus sq_scene_from_json(const char *json, struct SqScene **out);

// # Safety
// `scene` must come from a scene constructor, or be null.
void sq_scene_free(struct SqScene *scene);

// # Safety
// `scene` must be a live handle or null (returns 0).
size_t sq_scene_frame_count(const struct SqScene *scene);

// # Safety
// `scene` must be a live handle or null (returns 0).
size_t sq_scene_object_count(const struct SqScene *scene);

// # Safety
// `scene` must be a live handle or null (returns 0).
size_t sq_scene_point_count(const struct SqScene *scene);

// Runs generation over `n` scenes. `config_toml` may be null for defaults.
// Scenes are copied; the handles remain owned by the caller.
//
// # Safety
// `scenes` must point to `n` live handles; `out` must be writable.
enum SqStatus sq_generate(const struct SqScene *const *scenes,
                          size_t n,
                          const char *config_toml,
                          struct SqQaSet **out);

// # Safety
// `set` must be a live handle or null (returns 0).
size_t sq_qa_set_len(const struct SqQaSet *set);

// Serializes the set as schema-headed JSONL into a new string.
//
// # Safety
// `set` must be a live handle and `out` writable.
enum SqStatus sq_qa_set_to_jsonl(const struct SqQaSet *set, char **out);

// # Safety
// `set` must come from [`sq_generate`], or be null.
void sq_qa_set_free(struct SqQaSet *set);

// # Safety
// `s` must come from this library, or be null.
void sq_string_free(char *s);

// Mean relative accuracy of one numeric prediction over the default
// thresholds.
//
// # Safety
// `out` must be writable.
enum SqStatus sq_mra(double prediction, double truth, double *out);

// Normalizes `n` model scores into [0.2, 1.0], writing `n` values to `out`.
//
// # Safety
// `values` and `out` must each point to `n` doubles.
enum SqStatus sq_normalize_radar(const double *values, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPATIAL_QA_H */
