/* C interface of the tfe library. Every function returns a tfe_status; on
 * failure tfe_last_error() holds a message for the calling thread. Handles are
 * opaque and released with the matching *_free function. */
#ifndef TFE_TFE_H
#define TFE_TFE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TFE_API __declspec(dllexport)
#else
#define TFE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tfe_status {
  TFE_OK = 0,
  TFE_ERR_INVALID_ARGUMENT = 1,
  TFE_ERR_GENERATION_EXHAUSTED = 2,
  TFE_ERR_STEPPED_TERMINAL = 3,
  TFE_ERR_PARSE = 4,
  TFE_ERR_VALIDATION = 5,
  TFE_ERR_FUTURE_EMPTY = 6,
  TFE_ERR_MISSING_GENERATOR = 7,
  TFE_ERR_EMPTY_STORE = 8,
  TFE_ERR_UNSEEN_PAIR = 9,
  TFE_ERR_G2_UNAVAILABLE = 10,
  TFE_ERR_NON_FINITE_LOSS = 11,
  TFE_ERR_CONTRACT_VIOLATION = 12,
  TFE_ERR_IO = 13,
  TFE_ERR_INTERNAL = 100
} tfe_status;

typedef enum tfe_family { TFE_FAMILY_RDS = 0, TFE_FAMILY_SSM = 1 } tfe_family;

typedef enum tfe_policy {
  TFE_POLICY_UNIFORM = 0,
  TFE_POLICY_GREEDY = 1
} tfe_policy;

typedef struct tfe_config tfe_config;
typedef struct tfe_task tfe_task;
typedef struct tfe_evaluator tfe_evaluator;
typedef struct tfe_train_result tfe_train_result;
typedef struct tfe_selftest tfe_selftest;

typedef struct tfe_embedding {
  int32_t x;
  int32_t y;
  int32_t has_sword;
  int32_t has_shield;
} tfe_embedding;

typedef struct tfe_seed_summary {
  uint64_t seed;
  double final_train_return;
  double final_q_error;
  double final_greedy_return;
  double final_e1;
  double final_e2;
  double final_delusion;
  int64_t sim_applied;
  int64_t sim_rejected;
  int64_t injector_fallbacks;
} tfe_seed_summary;

TFE_API const char* tfe_last_error(void);
TFE_API const char* tfe_status_name(tfe_status status);
TFE_API void tfe_string_free(char* s);

/* Configuration. */
TFE_API tfe_status tfe_config_parse(const char* json_text, tfe_config** out);
TFE_API tfe_status tfe_config_load(const char* path, tfe_config** out);
TFE_API tfe_status tfe_config_set_output_dir(tfe_config* config, const char* dir);
TFE_API tfe_status tfe_config_set_threads(tfe_config* config, int threads);
TFE_API tfe_status tfe_config_set_seeds(tfe_config* config, const uint64_t* seeds, size_t n);
/* Resolved output directory of the run; free with tfe_string_free. */
TFE_API tfe_status tfe_config_output_dir(const tfe_config* config, char** out);
TFE_API tfe_status tfe_config_dump(const tfe_config* config, char** out);
TFE_API void tfe_config_free(tfe_config* config);

/* Tasks. */
TFE_API tfe_status tfe_task_generate(tfe_family family, int width, int height, double difficulty,
                                     uint64_t seed, tfe_task** out);
TFE_API tfe_status tfe_task_load(const char* path, tfe_task** out);
TFE_API tfe_status tfe_task_save(const tfe_task* task, const char* path);
TFE_API tfe_status tfe_task_id(const tfe_task* task, uint64_t* out);
TFE_API void tfe_task_free(tfe_task* task);

/* Evaluator checkpoints. probs receives support_size values. */
TFE_API tfe_status tfe_evaluator_load(const char* path, tfe_evaluator** out);
TFE_API tfe_status tfe_evaluator_support_size(const tfe_evaluator* ev, int* out);
TFE_API tfe_status tfe_evaluator_predict(const tfe_evaluator* ev, uint64_t task_id,
                                         tfe_embedding source, tfe_embedding target,
                                         double* probs, size_t n);
TFE_API void tfe_evaluator_free(tfe_evaluator* ev);

/* Commands. */
TFE_API tfe_status tfe_gen_tasks(const tfe_config* config, size_t* n_written);
/* On a seed failure the partial metrics CSV is still written and the failing
 * status is returned with *out left null. */
TFE_API tfe_status tfe_train(const tfe_config* config, tfe_train_result** out);
TFE_API tfe_status tfe_train_result_metrics_path(const tfe_train_result* r, char** out);
TFE_API size_t tfe_train_result_seed_count(const tfe_train_result* r);
TFE_API tfe_status tfe_train_result_seed(const tfe_train_result* r, size_t i,
                                         tfe_seed_summary* out);
TFE_API void tfe_train_result_free(tfe_train_result* r);

TFE_API tfe_status tfe_eval(const tfe_config* config, const char* checkpoint, char** out_path);

/* Exact distance tables as CSV text; free with tfe_string_free. */
TFE_API tfe_status tfe_oracle(const tfe_task* task, tfe_policy policy, int support_size,
                              int radius, char** out_csv);

TFE_API tfe_status tfe_selftest_run(tfe_selftest** out);
TFE_API size_t tfe_selftest_count(const tfe_selftest* s);
TFE_API tfe_status tfe_selftest_line(const tfe_selftest* s, size_t i, const char** name,
                                     int* passed, const char** detail);
TFE_API void tfe_selftest_free(tfe_selftest* s);

#ifdef __cplusplus
}
#endif

#endif /* TFE_TFE_H */
