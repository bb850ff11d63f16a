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

#include "fedgen/fedgen.h"

#include <exception>
#include <string>
#include <vector>

#include "fedgen/config.hpp"
#include "fedgen/errors.hpp"
#include "fedgen/experiment.hpp"

struct fedgen_config {
  fedgen::cfg::ExperimentConfig value;
  std::string mode_name;
};

struct fedgen_cohorts {
  std::vector<fedgen::data::CohortSplit> value;
};

struct fedgen_run {
  std::vector<fedgen::exp::MetricRow> metrics;
};

namespace {

thread_local std::string last_error;

fedgen_status fail(fedgen_status status, const std::string& message) {
  last_error = message;
  return status;
}

// Maps the library's exception types onto status codes.
template <typename F>
fedgen_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return FEDGEN_OK;
  } catch (const fedgen::ConfigError& e) {
    return fail(FEDGEN_CONFIG_ERROR, e.what());
  } catch (const fedgen::DataError& e) {
    return fail(FEDGEN_DATA_ERROR, e.what());
  } catch (const fedgen::FormatError& e) {
    return fail(FEDGEN_DATA_ERROR, e.what());
  } catch (const fedgen::DimensionError& e) {
    return fail(FEDGEN_DATA_ERROR, e.what());
  } catch (const fedgen::InvalidArgument& e) {
    return fail(FEDGEN_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(FEDGEN_RUNTIME_ERROR, e.what());
  } catch (...) {
    return fail(FEDGEN_RUNTIME_ERROR, "unknown failure");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw fedgen::InvalidArgument(what);
}

fedgen_config* wrap(fedgen::cfg::ExperimentConfig c) {
  auto* out = new fedgen_config{std::move(c), {}};
  out->mode_name = fedgen::fed::to_string(out->value.federation.mode);
  return out;
}

}  // namespace

extern "C" {

const char* fedgen_version(void) { return "1.0.0"; }

const char* fedgen_last_error(void) { return last_error.c_str(); }

fedgen_status fedgen_config_load(const char* path, fedgen_config** out) {
  return guarded([&] {
    require(out != nullptr, "fedgen_config_load: out is NULL");
    *out = wrap(path == nullptr ? fedgen::cfg::parse_config("") : fedgen::cfg::load_config(path));
  });
}

fedgen_status fedgen_config_parse(const char* text, fedgen_config** out) {
  return guarded([&] {
    require(out != nullptr, "fedgen_config_parse: out is NULL");
    *out = wrap(fedgen::cfg::parse_config(text == nullptr ? "" : text));
  });
}

fedgen_status fedgen_config_set_mode(fedgen_config* config, const char* mode) {
  return guarded([&] {
    require(config != nullptr && mode != nullptr, "fedgen_config_set_mode: NULL argument");
    try {
      config->value.federation.mode = fedgen::fed::mode_from_string(mode);
    } catch (const fedgen::Error& e) {
      throw fedgen::ConfigError(e.what());
    }
    config->mode_name = fedgen::fed::to_string(config->value.federation.mode);
  });
}

fedgen_status fedgen_config_set_seed(fedgen_config* config, uint64_t seed) {
  return guarded([&] {
    require(config != nullptr, "fedgen_config_set_seed: config is NULL");
    config->value.federation.seed = seed;
  });
}

fedgen_status fedgen_config_get_mode(const fedgen_config* config, const char** mode) {
  return guarded([&] {
    require(config != nullptr && mode != nullptr, "fedgen_config_get_mode: NULL argument");
    *mode = config->mode_name.c_str();
  });
}

fedgen_status fedgen_config_get_seed(const fedgen_config* config, uint64_t* seed) {
  return guarded([&] {
    require(config != nullptr && seed != nullptr, "fedgen_config_get_seed: NULL argument");
    *seed = config->value.federation.seed;
  });
}

void fedgen_config_free(fedgen_config* config) { delete config; }

fedgen_status fedgen_cohorts_generate(const fedgen_config* config, fedgen_cohorts** out) {
  return guarded([&] {
    require(config != nullptr && out != nullptr, "fedgen_cohorts_generate: NULL argument");
    *out = new fedgen_cohorts{fedgen::cfg::make_cohorts(config->value.data)};
  });
}

fedgen_status fedgen_cohorts_load(const char* dir, fedgen_cohorts** out) {
  return guarded([&] {
    require(dir != nullptr && out != nullptr, "fedgen_cohorts_load: NULL argument");
    *out = new fedgen_cohorts{fedgen::exp::read_cohorts(dir)};
  });
}

fedgen_status fedgen_cohorts_save(const fedgen_cohorts* cohorts, const char* dir) {
  return guarded([&] {
    require(cohorts != nullptr && dir != nullptr, "fedgen_cohorts_save: NULL argument");
    fedgen::exp::write_cohorts(dir, cohorts->value);
  });
}

fedgen_status fedgen_cohorts_count(const fedgen_cohorts* cohorts, size_t* hospitals) {
  return guarded([&] {
    require(cohorts != nullptr && hospitals != nullptr, "fedgen_cohorts_count: NULL argument");
    *hospitals = cohorts->value.size();
  });
}

void fedgen_cohorts_free(fedgen_cohorts* cohorts) { delete cohorts; }

fedgen_status fedgen_run_experiment(const fedgen_config* config, const fedgen_cohorts* cohorts, const char* out_dir,
                                    fedgen_run** out) {
  return guarded([&] {
    require(config != nullptr && cohorts != nullptr && out != nullptr, "fedgen_run_experiment: NULL argument");
    auto result = fedgen::exp::run_experiment(config->value, cohorts->value,
                                              out_dir == nullptr ? std::filesystem::path() : out_dir);
    *out = new fedgen_run{std::move(result.metrics)};
  });
}

fedgen_status fedgen_run_metric_count(const fedgen_run* run, size_t* count) {
  return guarded([&] {
    require(run != nullptr && count != nullptr, "fedgen_run_metric_count: NULL argument");
    *count = run->metrics.size();
  });
}

fedgen_status fedgen_run_metric(const fedgen_run* run, size_t index, const char** metric, const char** regime,
                                double* value) {
  return guarded([&] {
    require(run != nullptr && metric != nullptr && regime != nullptr && value != nullptr,
            "fedgen_run_metric: NULL argument");
    require(index < run->metrics.size(), "fedgen_run_metric: index out of range");
    const auto& row = run->metrics[index];
    *metric = row.metric.c_str();
    *regime = row.regime.c_str();
    *value = row.value;
  });
}

fedgen_status fedgen_run_lookup(const fedgen_run* run, const char* metric, const char* regime, double* value) {
  return guarded([&] {
    require(run != nullptr && metric != nullptr && regime != nullptr && value != nullptr,
            "fedgen_run_lookup: NULL argument");
    *value = fedgen::exp::metric(run->metrics, metric, regime);
  });
}

void fedgen_run_free(fedgen_run* run) { delete run; }

fedgen_status fedgen_evaluate_files(const fedgen_config* config, const char* real_path, const char* synthetic_path,
                                    const char* holdout_path, uint64_t seed, const char* out_csv) {
  return guarded([&] {
    require(real_path != nullptr && synthetic_path != nullptr && out_csv != nullptr,
            "fedgen_evaluate_files: NULL argument");
    const fedgen::cfg::EvalConfig eval = config == nullptr ? fedgen::cfg::EvalConfig{} : config->value.eval;
    const auto real = fedgen::data::read_tensor(real_path);
    const auto syn = fedgen::data::read_tensor(synthetic_path);
    fedgen::data::BinarySequenceTensor holdout;
    if (holdout_path != nullptr) holdout = fedgen::data::read_tensor(holdout_path);
    const auto rows =
        fedgen::exp::evaluate_pair(real, syn, eval, seed, holdout_path != nullptr ? &holdout : nullptr);
    fedgen::exp::write_metrics_csv(out_csv, rows);
  });
}

fedgen_status fedgen_compare_runs(const char* const* run_dirs, size_t count, const char* out_csv) {
  return guarded([&] {
    require(run_dirs != nullptr && out_csv != nullptr, "fedgen_compare_runs: NULL argument");
    std::vector<std::filesystem::path> dirs;
    for (size_t i = 0; i < count; ++i) {
      require(run_dirs[i] != nullptr, "fedgen_compare_runs: NULL directory");
      dirs.emplace_back(run_dirs[i]);
    }
    fedgen::exp::write_summary_csv(out_csv, fedgen::exp::summarize_runs(dirs));
  });
}

}  // extern "C"
