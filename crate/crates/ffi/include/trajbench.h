#ifndef TRAJBENCH_H
#define TRAJBENCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_NULL_POINTER = 1,
  TB_STATUS_INVALID_UTF8 = 2,
  TB_STATUS_INVALID_INPUT = 3,
  TB_STATUS_PARSE = 4,
  TB_STATUS_IO = 5,
  TB_STATUS_UNDEFINED_METRIC = 6,
  TB_STATUS_CONFIG = 7,
  TB_STATUS_LLM = 8,
  TB_STATUS_NOT_FOUND = 9,
  TB_STATUS_INTERNAL = 10,
  TB_STATUS_PANIC = 11,
} TbStatus;

typedef struct TbDataset TbDataset;

typedef struct TbLabels TbLabels;

typedef struct TbScores TbScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *tb_last_error(void);

/**
 * Library version, a static string.
 */
const char *tb_version(void);

void tb_string_free(char *s);

/**
 * Great-circle distance in km.
 */
enum TbStatus tb_haversine_km(double lat1, double lon1, double lat2, double lon2, double *out);

enum TbStatus tb_dataset_read(const char *path, struct TbDataset **out);

enum TbStatus tb_dataset_from_jsonl(const char *text, struct TbDataset **out);

enum TbStatus tb_dataset_len(const struct TbDataset *ds, size_t *out);

void tb_dataset_free(struct TbDataset *ds);

/**
 * Stay-point sequence of one agent as rendered into prompts. A negative
 * `deviate_index` renders without the deviate marker.
 */
enum TbStatus tb_render_stay_sequence(const struct TbDataset *ds,
                                      const char *agent_id,
                                      int64_t deviate_index,
                                      char **out);

enum TbStatus tb_labels_read(const char *path, struct TbLabels **out);

enum TbStatus tb_labels_from_jsonl(const char *text, struct TbLabels **out);

void tb_labels_free(struct TbLabels *l);

enum TbStatus tb_scores_read(const char *path, struct TbScores **out);

enum TbStatus tb_scores_from_jsonl(const char *text, struct TbScores **out);

enum TbStatus tb_scores_to_jsonl(const struct TbScores *t, char **out);

/**
 * Number of scored agents.
 */
enum TbStatus tb_scores_len(const struct TbScores *t, size_t *out);

enum TbStatus tb_scores_get(const struct TbScores *t, const char *agent_id, double *out);

void tb_scores_free(struct TbScores *t);

/**
 * Runs a detector (`ompad|monav|traod|dae|dsvdd`). `params_toml` may be null
 * for defaults; `labels` may be null when none are known.
 */
enum TbStatus tb_detect(const struct TbDataset *ds,
                        const struct TbLabels *labels,
                        const char *method,
                        const char *params_toml,
                        struct TbScores **out);

enum TbStatus tb_roc_auc(const struct TbScores *t, const struct TbLabels *l, double *out);

enum TbStatus tb_average_precision(const struct TbScores *t, const struct TbLabels *l, double *out);

enum TbStatus tb_top_k_hits(const struct TbScores *t,
                            const struct TbLabels *l,
                            size_t k,
                            size_t *out);

/**
 * Score of a separate-mode answer: the last bracketed number in [0, 1].
 */
enum TbStatus tb_parse_separate_score(const char *text, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAJBENCH_H */
