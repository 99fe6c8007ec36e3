#ifndef NNKIT_H
#define NNKIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NnkitStatus {
  NNKIT_STATUS_OK = 0,
  NNKIT_STATUS_NULL_POINTER = 1,
  NNKIT_STATUS_INVALID_ARGUMENT = 2,
  NNKIT_STATUS_IO = 3,
  NNKIT_STATUS_PARSE = 4,
  NNKIT_STATUS_VERIFICATION = 5,
  NNKIT_STATUS_BUFFER_TOO_SMALL = 6,
  NNKIT_STATUS_NOT_FOUND = 7,
  NNKIT_STATUS_PANIC = 8,
} NnkitStatus;

typedef enum NnkitEngine {
  NNKIT_ENGINE_IBP = 0,
  NNKIT_ENGINE_BAB = 1,
} NnkitEngine;

typedef enum NnkitVerdict {
  NNKIT_VERDICT_VERIFIED = 0,
  NNKIT_VERDICT_FALSIFIED = 1,
  NNKIT_VERDICT_UNKNOWN = 2,
} NnkitVerdict;

/**
 * Opaque network handle.
 */
typedef struct NnkitNetwork NnkitNetwork;

/**
 * Opaque property handle.
 */
typedef struct NnkitProperty NnkitProperty;

/**
 * Opaque verification result handle.
 */
typedef struct NnkitResult NnkitResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *nnkit_last_error(void);

/**
 * Loads a model document from `path`.
 */
enum NnkitStatus nnkit_network_load(const char *path, struct NnkitNetwork **out);

/**
 * Parses a model document from a JSON string.
 */
enum NnkitStatus nnkit_network_from_json(const char *json, struct NnkitNetwork **out);

enum NnkitStatus nnkit_network_save(const struct NnkitNetwork *net, const char *path);

enum NnkitStatus nnkit_network_input_dim(const struct NnkitNetwork *net, size_t *out);

enum NnkitStatus nnkit_network_output_dim(const struct NnkitNetwork *net, size_t *out);

/**
 * Inference-mode forward pass; `y_len` must be at least the output dimension.
 */
enum NnkitStatus nnkit_network_forward(const struct NnkitNetwork *net,
                                       const double *x,
                                       size_t x_len,
                                       double *y,
                                       size_t y_len);

/**
 * Index of the largest output (lowest index on ties).
 */
enum NnkitStatus nnkit_network_classify(const struct NnkitNetwork *net,
                                        const double *x,
                                        size_t x_len,
                                        size_t *out);

void nnkit_network_free(struct NnkitNetwork *net);

/**
 * Parses an SMT-LIB property.
 */
enum NnkitStatus nnkit_property_parse_smtlib(const char *text, struct NnkitProperty **out);

/**
 * L∞ robustness query of radius `epsilon` around `x0` in the unit cube.
 */
enum NnkitStatus nnkit_property_robustness(const double *x0,
                                           size_t len,
                                           size_t label,
                                           size_t num_classes,
                                           double epsilon,
                                           struct NnkitProperty **out);

/**
 * Emits the property as SMT-LIB; release the string with [`nnkit_string_free`].
 */
enum NnkitStatus nnkit_property_to_smtlib(const struct NnkitProperty *prop, char **out);

void nnkit_string_free(char *s);

void nnkit_property_free(struct NnkitProperty *prop);

/**
 * Runs a verifier. `timeout_secs <= 0` means no time budget; `max_nodes == 0`
 * keeps the default node budget.
 */
enum NnkitStatus nnkit_verify(const struct NnkitNetwork *net,
                              const struct NnkitProperty *prop,
                              enum NnkitEngine engine,
                              double timeout_secs,
                              size_t max_nodes,
                              uint64_t seed,
                              struct NnkitResult **out);

enum NnkitStatus nnkit_result_verdict(const struct NnkitResult *res, enum NnkitVerdict *out);

/**
 * Nodes explored by the search.
 */
enum NnkitStatus nnkit_result_nodes(const struct NnkitResult *res, size_t *out);

/**
 * Copies the counterexample input and output. Returns `NotFound` when the
 * verdict is not Falsified; `disjunct` may be null.
 */
enum NnkitStatus nnkit_result_counterexample(const struct NnkitResult *res,
                                             double *x,
                                             size_t x_len,
                                             double *y,
                                             size_t y_len,
                                             size_t *disjunct);

void nnkit_result_free(struct NnkitResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NNKIT_H */
