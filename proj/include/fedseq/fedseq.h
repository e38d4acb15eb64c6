/* SPDX-License-Identifier: Apache-2.0 */
#ifndef FEDSEQ_FEDSEQ_H
#define FEDSEQ_FEDSEQ_H

#include <stddef.h>
#include <stdint.h>

#if defined(FEDSEQ_BUILDING_LIBRARY)
#define FEDSEQ_API __attribute__((visibility("default")))
#else
#define FEDSEQ_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every call returns a status; on failure fedseq_last_error() describes it. */
typedef enum fedseq_status {
  FEDSEQ_OK = 0,
  FEDSEQ_ERR_INVALID_ARGUMENT = 1,
  FEDSEQ_ERR_SHAPE_MISMATCH = 2,
  FEDSEQ_ERR_NON_FINITE = 3,
  FEDSEQ_ERR_DEGENERATE = 4,
  FEDSEQ_ERR_IO = 5,
  FEDSEQ_ERR_PARSE = 6,
  FEDSEQ_ERR_PROTOCOL = 7,
  FEDSEQ_ERR_TIMEOUT = 8,
  FEDSEQ_ERR_LAYOUT_MISMATCH = 9,
  FEDSEQ_ERR_INTERNAL = 10,
  FEDSEQ_ERR_UNKNOWN = 99
} fedseq_status;

typedef struct fedseq_config fedseq_config;
typedef struct fedseq_report fedseq_report;
typedef struct fedseq_model fedseq_model;

typedef struct fedseq_metrics {
  double valence_ccc;
  double arousal_ccc;
  double valence_pearson;
  double arousal_pearson;
  size_t n_frames;
} fedseq_metrics;

/* Called once the TCP server is listening, with the bound port. */
typedef void (*fedseq_ready_fn)(uint16_t port, void* user);

FEDSEQ_API const char* fedseq_version(void);
FEDSEQ_API const char* fedseq_build_fingerprint(void);
/* Message of the last failed call on this thread; "" if none. */
FEDSEQ_API const char* fedseq_last_error(void);
FEDSEQ_API const char* fedseq_status_name(fedseq_status status);

/* Strings returned through char** are owned by the caller. */
FEDSEQ_API void fedseq_string_free(char* s);

/* Configuration */
FEDSEQ_API fedseq_status fedseq_config_new(fedseq_config** out);
/* Reads a key = value file; FEDSEQ_SEED overrides the seed. */
FEDSEQ_API fedseq_status fedseq_config_load(const char* path, fedseq_config** out);
FEDSEQ_API fedseq_status fedseq_config_parse(const char* text, fedseq_config** out);
FEDSEQ_API fedseq_status fedseq_config_set(fedseq_config* config, const char* key, const char* value);
FEDSEQ_API fedseq_status fedseq_config_get(const fedseq_config* config, const char* key, char** out);
FEDSEQ_API fedseq_status fedseq_config_validate(const fedseq_config* config);
/* Checks the published grid; soft findings come back newline-separated. */
FEDSEQ_API fedseq_status fedseq_config_check_paper_grid(const fedseq_config* config, char** warnings);
FEDSEQ_API fedseq_status fedseq_config_to_text(const fedseq_config* config, char** out);
FEDSEQ_API void fedseq_config_free(fedseq_config* config);

/* Grid runner support: search == 0 lists the published optima, otherwise
   the full search grid. */
FEDSEQ_API fedseq_status fedseq_grid_size(const fedseq_config* base, int search, size_t* count);
FEDSEQ_API fedseq_status fedseq_grid_config(const fedseq_config* base, int search, size_t index,
                                            fedseq_config** out);

/* Cross-validation */
FEDSEQ_API fedseq_status fedseq_run_cross_validation(const fedseq_config* config, fedseq_report** out);
/* format: "text", "csv" or "jsonl". */
FEDSEQ_API fedseq_status fedseq_report_format(const fedseq_report* report, const char* format, char** out);
FEDSEQ_API fedseq_status fedseq_report_parse_jsonl(const char* text, fedseq_report** out);
FEDSEQ_API fedseq_status fedseq_report_mean_ccc(const fedseq_report* report, double* valence, double* arousal);
FEDSEQ_API fedseq_status fedseq_report_fold_count(const fedseq_report* report, size_t* count);
FEDSEQ_API fedseq_status fedseq_report_fold_metrics(const fedseq_report* report, size_t fold, fedseq_metrics* out);
FEDSEQ_API void fedseq_report_free(fedseq_report* report);

/* Data */
FEDSEQ_API fedseq_status fedseq_generate_synthetic(size_t participants, size_t frames, uint64_t seed,
                                                   size_t features, const char* out_dir);

/* Models */
FEDSEQ_API fedseq_status fedseq_model_load(const char* path, fedseq_model** out);
FEDSEQ_API fedseq_status fedseq_model_save(const fedseq_model* model, const char* path);
FEDSEQ_API fedseq_status fedseq_model_describe(const fedseq_model* model, char** out);
/* pooling: "pooled" (default when NULL) or "per_participant". */
FEDSEQ_API fedseq_status fedseq_evaluate(const fedseq_model* model, const char* data_dir, const char* pooling,
                                         fedseq_metrics* out);
FEDSEQ_API void fedseq_model_free(fedseq_model* model);

/* Federation over TCP */
FEDSEQ_API fedseq_status fedseq_serve_federated(const fedseq_config* config, const char* listen_address,
                                                fedseq_ready_fn ready, void* user, fedseq_model** out);
/* config may be NULL: the architecture then comes from the server. */
FEDSEQ_API fedseq_status fedseq_run_client(const char* server_address, const char* participant_id,
                                           const char* data_dir, const fedseq_config* config, uint32_t* rounds);

#ifdef __cplusplus
}
#endif

#endif /* FEDSEQ_FEDSEQ_H */
