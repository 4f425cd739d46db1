#ifndef FTGAN_FTGAN_H
#define FTGAN_FTGAN_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(FTGAN_BUILDING_LIBRARY)
#define FTGAN_API __attribute__((visibility("default")))
#else
#define FTGAN_API
#endif

/* Status codes double as the command-line exit codes. */
typedef enum ftgan_status {
  FTGAN_OK = 0,
  FTGAN_ERR_INTERNAL = 1,
  FTGAN_ERR_INVALID_ARGUMENT = 2,
  FTGAN_ERR_SHAPE = 3,
  FTGAN_ERR_IO = 4,
  FTGAN_ERR_INTEGRITY = 5,
  FTGAN_ERR_VERSION = 6,
  FTGAN_ERR_STAGE_MISMATCH = 7,
  FTGAN_ERR_PRECONDITION = 8,
  FTGAN_ERR_NON_FINITE = 9,
  FTGAN_ERR_FORMAT = 10,
  FTGAN_ERR_UNKNOWN_TENSOR = 11
} ftgan_status;

typedef enum ftgan_stage { FTGAN_STAGE_FLOW = 0, FTGAN_STAGE_TEXTURE = 1, FTGAN_STAGE_JOINT = 2 } ftgan_stage;

typedef struct ftgan_config ftgan_config;
typedef struct ftgan_dataset ftgan_dataset;
typedef struct ftgan_models ftgan_models;

/* Message of the last failure on the calling thread. */
FTGAN_API const char* ftgan_last_error(void);
FTGAN_API const char* ftgan_status_name(ftgan_status status);

/* Strings returned through char** belong to the caller. */
FTGAN_API void ftgan_string_free(char* s);

/* path may be NULL for the defaults. */
FTGAN_API ftgan_status ftgan_config_create(const char* path, ftgan_config** out);
/* value is JSON text, e.g. "200" or "\"desk\"". */
FTGAN_API ftgan_status ftgan_config_set(ftgan_config* cfg, const char* key, const char* value);
FTGAN_API ftgan_status ftgan_config_set_seed(ftgan_config* cfg, uint64_t seed);
FTGAN_API ftgan_status ftgan_config_json(const ftgan_config* cfg, char** out);
/* <out_dir>/run_manifest.json: command, arguments and the effective config. */
FTGAN_API ftgan_status ftgan_write_manifest(const ftgan_config* cfg, const char* command, const char* arguments_json,
                                            const char* out_dir);
FTGAN_API void ftgan_config_free(ftgan_config* cfg);

FTGAN_API ftgan_status ftgan_dataset_generate(const ftgan_config* cfg, ftgan_dataset** out);
FTGAN_API ftgan_status ftgan_dataset_load(const char* dir, ftgan_dataset** out);
FTGAN_API ftgan_status ftgan_dataset_save(const ftgan_dataset* data, const ftgan_config* cfg, const char* dir);
FTGAN_API ftgan_status ftgan_dataset_size(const ftgan_dataset* data, int* out);
FTGAN_API void ftgan_dataset_free(ftgan_dataset* data);

FTGAN_API ftgan_status ftgan_models_init(const ftgan_config* cfg, ftgan_stage stage, ftgan_models** out);
/* expected_stage < 0 accepts any stage. */
FTGAN_API ftgan_status ftgan_models_load(const char* dir, int expected_stage, ftgan_models** out);
/* Flow pair from a flow-stage checkpoint, texture pair from a texture-stage one. */
FTGAN_API ftgan_status ftgan_models_load_pretrained(const char* flow_dir, const char* texture_dir,
                                                    ftgan_models** out);
FTGAN_API ftgan_status ftgan_models_save(const ftgan_models* models, const char* dir);
FTGAN_API ftgan_status ftgan_models_stage(const ftgan_models* models, ftgan_stage* out);
FTGAN_API void ftgan_models_free(ftgan_models* models);

typedef void (*ftgan_progress_fn)(int iteration, int total, double loss_d, double loss_g, void* user);

/* Trains in place; writes train_log.jsonl and checkpoint/ under out_dir. */
FTGAN_API ftgan_status ftgan_train(ftgan_models* models, const ftgan_dataset* data, const ftgan_config* cfg,
                                   ftgan_stage stage, const char* out_dir, ftgan_progress_fn progress, void* user);
/* flow_file NULL conditions on generated flow; otherwise on the flow clip in that file. */
FTGAN_API ftgan_status ftgan_sample(ftgan_models* models, const ftgan_config* cfg, int n, const char* flow_file,
                                    const char* out_dir);
FTGAN_API ftgan_status ftgan_eval(ftgan_models* models, const ftgan_dataset* data, const ftgan_config* cfg,
                                  const char* out_dir, char** report_json);
/* models may be NULL. */
FTGAN_API ftgan_status ftgan_baseline_warp(const ftgan_dataset* data, const ftgan_config* cfg, ftgan_models* models,
                                           const char* out_dir, char** report_json);

#ifdef __cplusplus
}
#endif

#endif
