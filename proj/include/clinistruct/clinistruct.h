#ifndef CLINISTRUCT_H
#define CLINISTRUCT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CLINISTRUCT_BUILDING)
#    define CS_API __declspec(dllexport)
#  else
#    define CS_API __declspec(dllimport)
#  endif
#else
#  define CS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cs_status {
    CS_OK = 0,
    CS_ERR_INVALID_ARGUMENT = 1,
    CS_ERR_IO = 2,
    CS_ERR_PARSE = 3,
    CS_ERR_NOT_FOUND = 4,
    CS_ERR_CONFLICT = 5,
    CS_ERR_STATE = 6,
    CS_ERR_INTERNAL = 7
} cs_status;

typedef struct cs_config cs_config;
typedef struct cs_pipeline cs_pipeline;
typedef struct cs_model cs_model;
typedef struct cs_service cs_service;

/* Strings returned through char** are heap-allocated; release them with
   cs_string_free. */
CS_API void cs_string_free(char* s);

CS_API const char* cs_version(void);
CS_API const char* cs_status_name(cs_status status);
/* Message of the last failed call on this thread; "" when none. */
CS_API const char* cs_last_error(void);

/* Configuration */
CS_API cs_status cs_config_new(cs_config** out);
CS_API cs_status cs_config_load(const char* path, cs_config** out);
/* Dotted key, e.g. "embedding.dim" = "50". */
CS_API cs_status cs_config_set(cs_config* cfg, const char* key, const char* value);
CS_API cs_status cs_config_apply_env(cs_config* cfg);
CS_API cs_status cs_config_hash(const cs_config* cfg, char** out);
CS_API cs_status cs_config_to_json(const cs_config* cfg, char** out);
CS_API void cs_config_free(cs_config* cfg);

/* Pipeline stages */
CS_API size_t cs_stage_count(void);
CS_API const char* cs_stage_name(size_t i);
CS_API int cs_is_stage(const char* name);

CS_API cs_status cs_pipeline_new(const cs_config* cfg, cs_pipeline** out);
/* stage: one of cs_stage_name() or "synth". The one-line summary is returned
   in *summary when summary is not NULL. */
CS_API cs_status cs_pipeline_run(cs_pipeline* p, const char* stage, char** summary);
/* Warnings of the last run, as a JSON array of strings. */
CS_API cs_status cs_pipeline_warnings(const cs_pipeline* p, char** out);
/* Review outcomes of the last suggest stage, as a JSON array. */
CS_API cs_status cs_pipeline_review(const cs_pipeline* p, char** out);
CS_API cs_status cs_pipeline_artifact(const cs_pipeline* p, const char* name, char** out);
CS_API void cs_pipeline_free(cs_pipeline* p);

/* Embedding model */
CS_API cs_status cs_model_load(const char* path, cs_model** out);
CS_API size_t cs_model_vocab_size(const cs_model* m);
CS_API size_t cs_model_dim(const cs_model* m);
/* JSON object {"neighbors": [{"token", "similarity"}], "warning": string|null}. */
CS_API cs_status cs_model_neighbors(const cs_model* m, const char* term, size_t k, char** out);
CS_API cs_status cs_model_context_probability(const cs_model* m, const char* center, const char* context, double* out);
CS_API void cs_model_free(cs_model* m);

/* Review service */
CS_API cs_status cs_service_open(const cs_config* cfg, cs_service** out);
/* Dispatches one request without the network. target may carry a query
   string. *response is the JSON body. */
CS_API cs_status cs_service_handle(cs_service* s, const char* method, const char* target, const char* body,
                                   int* http_status, char** response);
/* Serves on a background thread; port 0 picks a free port. */
CS_API cs_status cs_service_listen(cs_service* s, const char* host, int port, int* bound_port);
CS_API cs_status cs_service_wait(cs_service* s);
CS_API cs_status cs_service_stop(cs_service* s);
CS_API void cs_service_free(cs_service* s);

/* Metrics and helpers */
CS_API cs_status cs_edit_distance(const char* a, const char* b, size_t* out);
/* Harmonic mean of two percentages. */
CS_API cs_status cs_f1(double precision, double sensitivity, double* out);
/* counts: n x n row-major confusion matrix (rows gold, columns predicted). */
CS_API cs_status cs_cohen_kappa(const uint64_t* counts, size_t n, double* out);
/* Text rendering of a report.csv written by the evaluate stage. */
CS_API cs_status cs_report_format(const char* report_csv, char** out);

#ifdef __cplusplus
}
#endif

#endif
