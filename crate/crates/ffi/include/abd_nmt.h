#ifndef ABD_NMT_H
#define ABD_NMT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Decoding modes for [`abd_translate`].
 */
#define ABD_MODE_MODEL -1

#define ABD_MODE_ABD 0

#define ABD_MODE_L2R 1

#define ABD_MODE_R2L 2

/**
 * Result codes.
 */
typedef enum AbdStatus {
  ABD_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  ABD_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  ABD_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad arguments or an unsupported request.
   */
  ABD_STATUS_INVALID_INPUT = 3,
  /**
   * Malformed or mismatched data.
   */
  ABD_STATUS_DATA_ERROR = 4,
  /**
   * A checkpoint or vocabulary file could not be parsed.
   */
  ABD_STATUS_FORMAT_ERROR = 5,
  /**
   * A file could not be read.
   */
  ABD_STATUS_IO_ERROR = 6,
  /**
   * A non-finite value appeared during computation.
   */
  ABD_STATUS_NUMERIC_ERROR = 7,
  /**
   * An internal error; the library state is unchanged.
   */
  ABD_STATUS_PANIC = 8,
} AbdStatus;

/**
 * A loaded model with its vocabularies.
 */
typedef struct AbdTranslator AbdTranslator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *abd_last_error(void);

/**
 * Library version as a static string.
 */
const char *abd_version(void);

/**
 * Loads a checkpoint. Null vocabulary paths mean `src.vocab` / `tgt.vocab`
 * next to the checkpoint.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum AbdStatus abd_translator_load(const char *model_path,
                                   const char *src_vocab_path,
                                   const char *tgt_vocab_path,
                                   struct AbdTranslator **out);

/**
 * Releases a translator. Null is ignored.
 *
 * # Safety
 * `t` must come from [`abd_translator_load`] and not be used afterwards.
 */
void abd_translator_free(struct AbdTranslator *t);

/**
 * Number of trainable scalars in the loaded model, or 0 for null.
 *
 * # Safety
 * `t` must be null or a live translator.
 */
uint64_t abd_translator_param_count(const struct AbdTranslator *t);

/**
 * Translates one whitespace-tokenized sentence. `mode` is one of the
 * `ABD_MODE_*` constants. The result goes to `*out` and must be released
 * with [`abd_string_free`].
 *
 * # Safety
 * `t` must be a live translator, `sentence` NUL-terminated and `out` writable.
 * A translator may be shared between threads.
 */
enum AbdStatus abd_translate(const struct AbdTranslator *t,
                             const char *sentence,
                             uint32_t beam,
                             int32_t mode,
                             char **out);

/**
 * Corpus BLEU (4-gram, single reference) of `n` hypothesis/reference
 * sentence pairs, written to `*score` in `[0, 1]`.
 *
 * # Safety
 * `hyps` and `refs` must point to `n` NUL-terminated strings each.
 */
enum AbdStatus abd_corpus_bleu(const char *const *hyps,
                               const char *const *refs,
                               size_t n,
                               bool lowercase,
                               double *score);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void abd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ABD_NMT_H */
