// Copyright 2026 The FedGen Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* C interface to the FedGen pipeline. Objects are opaque handles owned by
 * the caller and released with the matching *_free function. Every call
 * returns a fedgen_status; the message of the last failure on the calling
 * thread is available from fedgen_last_error(). */

#ifndef FEDGEN_FEDGEN_H_
#define FEDGEN_FEDGEN_H_

#include <stddef.h>
#include <stdint.h>

#if defined(FEDGEN_BUILDING_LIBRARY)
#define FEDGEN_API __attribute__((visibility("default")))
#else
#define FEDGEN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fedgen_status {
  FEDGEN_OK = 0,
  FEDGEN_INVALID_ARGUMENT = 1,
  FEDGEN_CONFIG_ERROR = 2,
  FEDGEN_DATA_ERROR = 3,
  FEDGEN_RUNTIME_ERROR = 4
} fedgen_status;

typedef struct fedgen_config fedgen_config;
typedef struct fedgen_cohorts fedgen_cohorts;
typedef struct fedgen_run fedgen_run;

FEDGEN_API const char* fedgen_version(void);
/* Message of the last failing call on this thread; empty after success. */
FEDGEN_API const char* fedgen_last_error(void);

/* Configuration. A NULL path or text yields the built-in defaults. */
FEDGEN_API fedgen_status fedgen_config_load(const char* path, fedgen_config** out);
FEDGEN_API fedgen_status fedgen_config_parse(const char* text, fedgen_config** out);
/* Overrides [run] mode and seed; the echoed source text is unchanged. */
FEDGEN_API fedgen_status fedgen_config_set_mode(fedgen_config* config, const char* mode);
FEDGEN_API fedgen_status fedgen_config_set_seed(fedgen_config* config, uint64_t seed);
FEDGEN_API fedgen_status fedgen_config_get_mode(const fedgen_config* config, const char** mode);
FEDGEN_API fedgen_status fedgen_config_get_seed(const fedgen_config* config, uint64_t* seed);
FEDGEN_API void fedgen_config_free(fedgen_config* config);

/* Hospital cohorts (train/val/test per hospital). */
FEDGEN_API fedgen_status fedgen_cohorts_generate(const fedgen_config* config, fedgen_cohorts** out);
FEDGEN_API fedgen_status fedgen_cohorts_load(const char* dir, fedgen_cohorts** out);
/* Writes one tensor file per hospital and split plus manifest.json. */
FEDGEN_API fedgen_status fedgen_cohorts_save(const fedgen_cohorts* cohorts, const char* dir);
FEDGEN_API fedgen_status fedgen_cohorts_count(const fedgen_cohorts* cohorts, size_t* hospitals);
FEDGEN_API void fedgen_cohorts_free(fedgen_cohorts* cohorts);

/* Runs both federated stages, generation and evaluation. A non-NULL
 * out_dir receives the config echo, checkpoints, round logs, metrics.csv
 * and the synthetic tensors. */
FEDGEN_API fedgen_status fedgen_run_experiment(const fedgen_config* config, const fedgen_cohorts* cohorts,
                                               const char* out_dir, fedgen_run** out);
FEDGEN_API fedgen_status fedgen_run_metric_count(const fedgen_run* run, size_t* count);
/* Strings stay valid until fedgen_run_free. */
FEDGEN_API fedgen_status fedgen_run_metric(const fedgen_run* run, size_t index, const char** metric,
                                           const char** regime, double* value);
FEDGEN_API fedgen_status fedgen_run_lookup(const fedgen_run* run, const char* metric, const char* regime,
                                           double* value);
FEDGEN_API void fedgen_run_free(fedgen_run* run);

/* Fidelity and privacy of a synthetic tensor file against a real one,
 * written as metrics CSV. holdout_path may be NULL, which skips membership
 * inference. config may be NULL for default evaluation settings. */
FEDGEN_API fedgen_status fedgen_evaluate_files(const fedgen_config* config, const char* real_path,
                                               const char* synthetic_path, const char* holdout_path, uint64_t seed,
                                               const char* out_csv);

/* Mean and standard deviation per (mode, metric, regime) over run
 * directories, written as CSV. */
FEDGEN_API fedgen_status fedgen_compare_runs(const char* const* run_dirs, size_t count, const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* FEDGEN_FEDGEN_H_ */
