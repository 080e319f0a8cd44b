/* SPDX-License-Identifier: Apache-2.0 */

/*
 * C interface to the mdap cross-domain recommender.
 *
 * Objects are opaque handles. Functions return an mdap_status; on failure a
 * description is available from mdap_last_error() on the calling thread.
 * Strings returned by the library stay valid until the next call on the same
 * thread that produces a string of the same kind.
 */

#ifndef MDAP_MDAP_H
#define MDAP_MDAP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MDAP_BUILDING_LIBRARY)
#    define MDAP_API __declspec(dllexport)
#  else
#    define MDAP_API __declspec(dllimport)
#  endif
#else
#  define MDAP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mdap_status {
    MDAP_OK = 0,
    MDAP_ERR_INVALID_ARGUMENT = 1,
    MDAP_ERR_SHAPE = 2,
    MDAP_ERR_PARAMETER = 3,
    MDAP_ERR_IO = 4,
    MDAP_ERR_PARSE = 5,
    MDAP_ERR_DATA = 6,
    MDAP_ERR_STATE = 7,
    MDAP_ERR_NUMERIC = 8,
    MDAP_ERR_TRAINING = 9,
    MDAP_ERR_INTERNAL = 10
} mdap_status;

typedef enum mdap_domain { MDAP_DOMAIN_SOURCE = 0, MDAP_DOMAIN_TARGET = 1 } mdap_domain;

typedef enum mdap_split { MDAP_SPLIT_TRAIN = 0, MDAP_SPLIT_VALID = 1, MDAP_SPLIT_TEST = 2 } mdap_split;

typedef enum mdap_log_level {
    MDAP_LOG_DEBUG = 0,
    MDAP_LOG_INFO = 1,
    MDAP_LOG_WARNING = 2,
    MDAP_LOG_ERROR = 3
} mdap_log_level;

typedef struct mdap_config mdap_config;
typedef struct mdap_dataset mdap_dataset;
typedef struct mdap_model mdap_model;

typedef struct mdap_domain_metrics {
    double recall;
    double ndcg;
    size_t n_users;
} mdap_domain_metrics;

typedef struct mdap_metrics {
    size_t cutoff;
    mdap_domain_metrics domains[2];
} mdap_metrics;

/* Library version, "major.minor.patch". */
MDAP_API const char* mdap_version(void);

/* Message of the last failure on this thread, or "" when none. */
MDAP_API const char* mdap_last_error(void);

/* Process exit code for a status: 0 ok, 3 numeric/training, 1 internal, 2 otherwise. */
MDAP_API int mdap_exit_code(mdap_status status);

/* Routes library log messages to `handler`; NULL restores the default stderr sink. */
typedef void (*mdap_log_handler)(mdap_log_level level, const char* message, void* user_data);
MDAP_API void mdap_set_log_handler(mdap_log_handler handler, void* user_data);

/* ---- run configuration -------------------------------------------------- */

MDAP_API mdap_status mdap_config_create(mdap_config** out);
MDAP_API void mdap_config_destroy(mdap_config* config);

/* Sets an option by flag name ("seed" or "--seed"); values are text. */
MDAP_API mdap_status mdap_config_set(mdap_config* config, const char* key, const char* value);

/* Applies a flat key=value file. */
MDAP_API mdap_status mdap_config_load_file(mdap_config* config, const char* path);

MDAP_API mdap_status mdap_config_validate(const mdap_config* config);

/* Canonical text of an option, or of the whole config when key is NULL. */
MDAP_API mdap_status mdap_config_get(const mdap_config* config, const char* key, const char** value);

/* Hex hash of the canonical config. */
MDAP_API mdap_status mdap_config_hash(const mdap_config* config, const char** value);

/* Runs prepare, synth, train, evaluate, ablate or grid. */
MDAP_API mdap_status mdap_command_run(const mdap_config* config, const char* command);

/* Human-readable summary of the last successful command on this thread. */
MDAP_API const char* mdap_last_summary(void);

/* ---- prepared datasets -------------------------------------------------- */

MDAP_API mdap_status mdap_dataset_open(const char* dir, mdap_dataset** out);
MDAP_API void mdap_dataset_close(mdap_dataset* dataset);

MDAP_API mdap_status mdap_dataset_counts(const mdap_dataset* dataset, size_t* users, size_t* items_s,
                                         size_t* items_t);

/* Number of (user, item) pairs in one domain and split. */
MDAP_API mdap_status mdap_dataset_split_size(const mdap_dataset* dataset, mdap_domain domain, mdap_split split,
                                             size_t* count);

/* ---- models ------------------------------------------------------------- */

MDAP_API mdap_status mdap_model_load(const char* path, mdap_model** out);
MDAP_API mdap_status mdap_model_save(const mdap_model* model, const char* path);
MDAP_API void mdap_model_free(mdap_model* model);

MDAP_API mdap_status mdap_model_id(const mdap_model* model, const char** id);

/* Evaluation-mode scores of one user for every item of `domain`.
 * `scores` must hold `capacity` doubles, at least the domain's item count. */
MDAP_API mdap_status mdap_model_scores(const mdap_model* model, const mdap_dataset* dataset, size_t user,
                                       mdap_domain domain, double* scores, size_t capacity);

/* Top-k item indices of `domain` for one user, training items excluded.
 * Writes min(k, eligible) indices and stores that count in `written`. */
MDAP_API mdap_status mdap_model_recommend(const mdap_model* model, const mdap_dataset* dataset, size_t user,
                                          mdap_domain domain, size_t k, uint32_t* items, size_t* written);

MDAP_API mdap_status mdap_model_evaluate(const mdap_model* model, const mdap_dataset* dataset, mdap_split split,
                                         size_t cutoff, mdap_metrics* metrics);

#ifdef __cplusplus
}
#endif

#endif /* MDAP_MDAP_H */
