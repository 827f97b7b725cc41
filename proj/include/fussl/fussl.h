/*
 * fussl — double-supervision self-supervised training protocol.
 *
 * C API of the shared library. All types are opaque handles; every
 * function returns a fussl_status, with outputs through pointers. Handles
 * are created by fussl_* constructors and released with the matching
 * *_free; strings returned through char** are heap-allocated and must be
 * released with fussl_string_free. Error details for the calling thread
 * are available via fussl_last_error().
 */
#ifndef FUSSL_H
#define FUSSL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fussl_status {
  FUSSL_OK = 0,
  FUSSL_ERROR_USAGE = 2,   /* bad arguments, unknown keys, bad config */
  FUSSL_ERROR_DATA = 3,    /* file format, labels, I/O */
  FUSSL_ERROR_NUMERIC = 4  /* numerical failures (e.g. indefinite pivots) */
} fussl_status;

typedef struct fussl_config fussl_config;     /* flat key = value run config */
typedef struct fussl_dataset fussl_dataset;   /* labeled vector dataset */
typedef struct fussl_encoder fussl_encoder;   /* backbone + projector weights */
typedef struct fussl_ensemble fussl_ensemble; /* m trained encoder blocks */
typedef struct fussl_labels fussl_labels;     /* fuzzy pseudo-labels */
typedef struct fussl_result fussl_result;     /* full pipeline output */

const char* fussl_version(void);

/* Message of the most recent failure on this thread; never NULL. */
const char* fussl_last_error(void);

void fussl_string_free(char* text);

/* ---------------------------------------------------------------- config */

fussl_status fussl_config_create(fussl_config** out);
void fussl_config_free(fussl_config* config);
fussl_status fussl_config_set(fussl_config* config, const char* key,
                              const char* value);
fussl_status fussl_config_get(const fussl_config* config, const char* key,
                              char** value_out);
/* Parses `key = value` lines ('#' comments). Values override defaults. */
fussl_status fussl_config_load_file(fussl_config* config, const char* path);
/* All keys, sorted, one `key = value` line each; re-parseable. */
fussl_status fussl_config_dump(const fussl_config* config, char** text_out);
fussl_status fussl_config_validate(const fussl_config* config);

/* --------------------------------------------------------------- dataset */

/* Synthetic hierarchical data from the gen.* keys and the config seed. */
fussl_status fussl_dataset_generate(const fussl_config* config,
                                    fussl_dataset** out);
fussl_status fussl_dataset_load(const char* path, fussl_dataset** out);
fussl_status fussl_dataset_save(const fussl_dataset* dataset, const char* path);
void fussl_dataset_free(fussl_dataset* dataset);
fussl_status fussl_dataset_info(const fussl_dataset* dataset, uint32_t* n,
                                uint32_t* dim, uint32_t* n_class,
                                uint32_t* n_super);
/* Deterministic shuffled split into train/test parts. */
fussl_status fussl_dataset_split(const fussl_dataset* dataset,
                                 double test_fraction, uint64_t seed,
                                 fussl_dataset** train, fussl_dataset** test);

/* ------------------------------------------------------------------- run */

/* Runs the full protocol (phase-1 ensemble training, pseudo-labeling,
 * block selection, phase-2 training) on `dataset` under `config`. */
fussl_status fussl_run(const fussl_dataset* dataset, const fussl_config* config,
                       fussl_result** out);
void fussl_result_free(fussl_result* result);

/* JSON-lines training metrics: one record per (phase, epoch, block) with
 * keys {phase, epoch, block, loss, lr, frozen_layers, wall_ms}. */
fussl_status fussl_result_metrics_jsonl(const fussl_result* result,
                                        char** text_out);
/* JSON-lines pseudo-labels: {index, kind, classes, weights}. */
fussl_status fussl_result_labels_jsonl(const fussl_result* result,
                                       char** text_out);
fussl_status fussl_result_selected_block(const fussl_result* result,
                                         uint32_t* index_out);

#define FUSSL_ENCODER_FINAL 0  /* after phase-2 training */
#define FUSSL_ENCODER_PHASE1 1 /* the selected block before phase 2 */

/* Clones the requested encoder out of the result; caller frees it. */
fussl_status fussl_result_encoder(const fussl_result* result, int which,
                                  fussl_encoder** out);
fussl_status fussl_result_save_ensemble(const fussl_result* result,
                                        const char* path);

/* --------------------------------------------------------------- encoder */

fussl_status fussl_encoder_save(const fussl_encoder* encoder, const char* path);
fussl_status fussl_encoder_load(const char* path, fussl_encoder** out);
void fussl_encoder_free(fussl_encoder* encoder);

/* -------------------------------------------------------------- ensemble */

fussl_status fussl_ensemble_load(const char* path, fussl_ensemble** out);
void fussl_ensemble_free(fussl_ensemble* ensemble);

/* Fuzzy pseudo-labels of every sample under the given mode
 * ("fuzzy", "hard-only", or "soft-only"). */
fussl_status fussl_pseudo_label(const fussl_ensemble* ensemble,
                                const fussl_dataset* dataset, const char* mode,
                                fussl_labels** out);
fussl_status fussl_labels_jsonl(const fussl_labels* labels, char** text_out);
void fussl_labels_free(fussl_labels* labels);

/* ------------------------------------------------------------ evaluation */

/* Linear probe: single linear layer + softmax trained on frozen backbone
 * features with true labels; reports test top-1. */
fussl_status fussl_linear_probe(const fussl_encoder* encoder,
                                const fussl_dataset* train,
                                const fussl_dataset* test, uint32_t epochs,
                                double lr, uint64_t seed, double* top1_out,
                                uint32_t* n_test_out);
/* Cosine k-nearest-neighbour probe on frozen backbone features. */
fussl_status fussl_knn_probe(const fussl_encoder* encoder,
                             const fussl_dataset* train,
                             const fussl_dataset* test, uint32_t k,
                             double* top1_out, uint32_t* n_test_out);

/* Cross-class transfer study: splits the dataset's classes in half within
 * every superclass, pre-trains on half A under `label_mode`, probes on
 * half B, and reports the within-superclass consistency of the soft
 * pseudo-labels next to its analytic chance level. Returns a one-line
 * JSON report {probe_top1, consistency, chance, soft_count, n_test}. */
fussl_status fussl_cross_class_run(const fussl_dataset* dataset,
                                   const fussl_config* config,
                                   const char* label_mode, char** report_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FUSSL_H */
