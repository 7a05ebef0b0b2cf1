#ifndef MGD_MGD_H
#define MGD_MGD_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MGD_API __declspec(dllexport)
#else
#define MGD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mgd_status {
  MGD_OK = 0,
  MGD_ERR_INVALID_ARGUMENT = 1,
  MGD_ERR_IO = 2,
  MGD_ERR_FORMAT = 3,
  MGD_ERR_EMPTY_CORPUS = 4,
  MGD_ERR_INSUFFICIENT_DATA = 5,
  MGD_ERR_PRECONDITION = 6,
  MGD_ERR_INTERNAL = 7
} mgd_status;

typedef enum mgd_stage {
  MGD_STAGE_INGEST = 0,
  MGD_STAGE_EXTRACT = 1,
  MGD_STAGE_INDEX = 2,
  MGD_STAGE_AFFINITY = 3,
  MGD_STAGE_CLUSTER = 4,
  MGD_STAGE_BASELINE = 5,
  MGD_STAGE_REPORT = 6
} mgd_stage;

typedef struct mgd_config mgd_config;
typedef struct mgd_pipeline mgd_pipeline;
typedef struct mgd_server mgd_server;

typedef void (*mgd_log_fn)(const char* message, void* user);

/* Message of the last failed call on this thread; never NULL. */
MGD_API const char* mgd_last_error(void);
MGD_API const char* mgd_version(void);
/* Strings returned through char** out-parameters are released here. */
MGD_API void mgd_string_free(char* s);

MGD_API mgd_status mgd_config_new(mgd_config** out);
MGD_API mgd_status mgd_config_load(const char* path, mgd_config** out);
MGD_API mgd_status mgd_config_set(mgd_config* cfg, const char* key, const char* value);
/* One "key=value" line; blank lines and '#' comments are accepted. */
MGD_API mgd_status mgd_config_apply_line(mgd_config* cfg, const char* line);
MGD_API mgd_status mgd_config_get(const mgd_config* cfg, const char* key, char** value);
MGD_API mgd_status mgd_config_text(const mgd_config* cfg, char** text);
MGD_API void mgd_config_free(mgd_config* cfg);

/* Writes images/, manifest.csv and labels.csv under dir. */
MGD_API mgd_status mgd_synth_genre_corpus(const char* dir, int genres, int per_genre, uint64_t seed);

/* The pipeline copies the configuration; log may be NULL. */
MGD_API mgd_status mgd_pipeline_new(const mgd_config* cfg, mgd_log_fn log, void* user, mgd_pipeline** out);
MGD_API mgd_status mgd_pipeline_run_stage(mgd_pipeline* p, mgd_stage stage, int force);
MGD_API mgd_status mgd_pipeline_run_all(mgd_pipeline* p, int force);
/* baseline: NULL or "" for the main clustering, else "phash" / "embedding". */
MGD_API mgd_status mgd_pipeline_eval_generate(mgd_pipeline* p, const char* baseline, size_t* task_count);
MGD_API mgd_status mgd_pipeline_eval_score(mgd_pipeline* p, const char* responses_path, const char* baseline,
                                           char** report_json);
MGD_API mgd_status mgd_pipeline_ksweep(mgd_pipeline* p, const int* ks, size_t count, const char* baseline);
MGD_API void mgd_pipeline_free(mgd_pipeline* p);

/* Serves the annotation API over the pipeline's tasks and assignment.
   port 0 picks a free port; ui_dir may be NULL. */
MGD_API mgd_status mgd_server_new(const mgd_pipeline* p, const char* baseline, const char* host, int port,
                                  const char* ui_dir, const char* response_log, mgd_server** out);
MGD_API mgd_status mgd_server_start(mgd_server* s, int* bound_port);
MGD_API mgd_status mgd_server_wait(mgd_server* s);
MGD_API mgd_status mgd_server_stop(mgd_server* s);
MGD_API void mgd_server_free(mgd_server* s);

#ifdef __cplusplus
}
#endif

#endif
