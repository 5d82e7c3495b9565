#ifndef DEPABLATE_H
#define DEPABLATE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DaStatus {
  DA_STATUS_OK = 0,
  DA_STATUS_NULL_POINTER = 1,
  DA_STATUS_INVALID_UTF8 = 2,
  DA_STATUS_PARSE = 3,
  DA_STATUS_STRUCTURE = 4,
  DA_STATUS_CONFIG = 5,
  DA_STATUS_IO = 6,
  DA_STATUS_CHECKPOINT = 7,
  // Inputs that do not fit together, such as misaligned treebanks.
  DA_STATUS_CONTRACT = 8,
  DA_STATUS_OTHER = 9,
  DA_STATUS_PANIC = 10,
} DaStatus;

// A trained parser loaded from a checkpoint.
typedef struct DaModel DaModel;

// A set of CoNLL-U sentences.
typedef struct DaTreebank DaTreebank;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *da_last_error(void);

// Reads a CoNLL-U file.
//
// # Safety
// `path` must be a nul-terminated string and `out` a writable pointer.
enum DaStatus da_treebank_read(const char *path, struct DaTreebank **out);

// Parses CoNLL-U text held in memory.
//
// # Safety
// `text` must be a nul-terminated string and `out` a writable pointer.
enum DaStatus da_treebank_parse(const char *text, struct DaTreebank **out);

// Number of sentences, or 0 for a null handle.
//
// # Safety
// `tb` must be null or a live handle.
size_t da_treebank_sentences(const struct DaTreebank *tb);

// Number of tokens, or 0 for a null handle.
//
// # Safety
// `tb` must be null or a live handle.
size_t da_treebank_tokens(const struct DaTreebank *tb);

// Serialises a treebank as CoNLL-U. Release the string with
// [`da_string_free`].
//
// # Safety
// `tb` must be a live handle and `out` a writable pointer.
enum DaStatus da_treebank_to_conllu(const struct DaTreebank *tb, char **out);

// # Safety
// `tb` must be null or a handle not yet freed.
void da_treebank_free(struct DaTreebank *tb);

// # Safety
// `s` must be null or a string returned by this library.
void da_string_free(char *s);

// Loads a checkpoint written by training.
//
// # Safety
// `path` must be a nul-terminated string and `out` a writable pointer.
enum DaStatus da_model_load(const char *path, struct DaModel **out);

// Whether the model reads POS tags, in which case [`da_model_parse`] needs
// `gold_tags` set or tags already present in the input.
//
// # Safety
// `model` must be null or a live handle.
bool da_model_uses_pos(const struct DaModel *model);

// Parses every sentence of `input` into a new treebank. With `gold_tags`
// the gold UPOS column is used as the predicted tags.
//
// # Safety
// `model` and `input` must be live handles and `out` a writable pointer.
enum DaStatus da_model_parse(const struct DaModel *model,
                             const struct DaTreebank *input,
                             bool gold_tags,
                             struct DaTreebank **out);

// # Safety
// `model` must be null or a handle not yet freed.
void da_model_free(struct DaModel *model);

// Labelled attachment score in percent.
//
// # Safety
// `gold` and `predicted` must be live handles and `out` a writable pointer.
enum DaStatus da_evaluate_las(const struct DaTreebank *gold,
                              const struct DaTreebank *predicted,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEPABLATE_H */
