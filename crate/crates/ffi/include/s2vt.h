#ifndef S2VT_H
#define S2VT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum S2vtStatus {
  S2VT_STATUS_OK = 0,
  S2VT_STATUS_INVALID_ARGUMENT = 1,
  S2VT_STATUS_DIMENSION_MISMATCH = 2,
  S2VT_STATUS_VOCABULARY_MISMATCH = 3,
  S2VT_STATUS_FORMAT = 4,
  S2VT_STATUS_DIVERGED = 5,
  S2VT_STATUS_IO = 6,
  S2VT_STATUS_NULL_POINTER = 7,
  S2VT_STATUS_INVALID_UTF8 = 8,
  S2VT_STATUS_PANIC = 9,
} S2vtStatus;

/*
 Opaque trained model.
 */
typedef struct S2vtModel S2vtModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static string that must not be freed.
 */
const char *s2vt_version(void);

/*
 Message for the last failed call on this thread, or null after a
 success. Valid until the next call into the library on this thread.
 */
const char *s2vt_last_error(void);

/*
 Releases a string returned through an out-parameter. Null is ignored.

 # Safety
 `s` must come from this library and must not be used afterwards.
 */
void s2vt_string_free(char *s);

/*
 Loads a checkpoint file into a new model handle.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum S2vtStatus s2vt_model_load(const char *path, struct S2vtModel **out);

/*
 Writes the model to a checkpoint file.

 # Safety
 `model` must be a live handle and `path` a NUL-terminated string.
 */
enum S2vtStatus s2vt_model_save(const struct S2vtModel *model, const char *path);

/*
 Releases a model handle. Null is ignored.

 # Safety
 `model` must come from `s2vt_model_load` and must not be used afterwards.
 */
void s2vt_model_free(struct S2vtModel *model);

/*
 Reports the model's widths and vocabulary size. Any out pointer may be null.

 # Safety
 `model` must be a live handle; non-null out pointers must be valid.
 */
enum S2vtStatus s2vt_model_dims(const struct S2vtModel *model,
                                size_t *frame_dim,
                                size_t *embed_dim,
                                size_t *hidden_dim,
                                size_t *vocab_size);

/*
 Greedy caption for `n_frames` row-major frames of width `frame_dim`.
 The caption is written to `*out` and must be freed with `s2vt_string_free`.

 # Safety
 `frames` must hold `n_frames * frame_dim` doubles and `out` must be valid.
 */
enum S2vtStatus s2vt_caption_greedy(const struct S2vtModel *model,
                                    const double *frames,
                                    size_t n_frames,
                                    size_t frame_dim,
                                    size_t max_len,
                                    char **out);

/*
 Caption from two models whose word distributions are mixed with weight
 `alpha` on model A. Each model reads its own frames.

 # Safety
 Frame buffers must hold `n * dim` doubles each and `out` must be valid.
 */
enum S2vtStatus s2vt_caption_fused(const struct S2vtModel *model_a,
                                   const struct S2vtModel *model_b,
                                   const double *frames_a,
                                   size_t n_frames_a,
                                   size_t frame_dim_a,
                                   const double *frames_b,
                                   size_t n_frames_b,
                                   size_t frame_dim_b,
                                   double alpha,
                                   size_t max_len,
                                   char **out);

/*
 METEOR-lite score of a hypothesis against `n_refs` references, with the
 default parameters. Sentences are tokenized like training captions.

 # Safety
 `hypothesis` and each of the `n_refs` entries of `references` must be
 NUL-terminated strings; `out` must be valid.
 */
enum S2vtStatus s2vt_meteor(const char *hypothesis,
                            const char *const *references,
                            size_t n_refs,
                            double *out);

/*
 Word-level edit distance between two sentences.

 # Safety
 `a` and `b` must be NUL-terminated strings; `out` must be valid.
 */
enum S2vtStatus s2vt_levenshtein_words(const char *a, const char *b, size_t *out);

/*
 Porter stem of one word, to be freed with `s2vt_string_free`.

 # Safety
 `word` must be a NUL-terminated string; `out` must be valid.
 */
enum S2vtStatus s2vt_stem(const char *word, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* S2VT_H */
