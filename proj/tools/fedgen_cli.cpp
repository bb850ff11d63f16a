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

// Command-line front end over the C interface.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedgen/fedgen.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

// Raised on a failing C call; carries the process exit code.
struct Failure {
  int code;
};

int exit_code(fedgen_status s) {
  switch (s) {
    case FEDGEN_OK:
      return kExitOk;
    case FEDGEN_CONFIG_ERROR:
    case FEDGEN_INVALID_ARGUMENT:
      return kExitConfig;
    case FEDGEN_DATA_ERROR:
      return kExitData;
    default:
      return kExitRuntime;
  }
}

void check(fedgen_status s, const std::string& command) {
  if (s == FEDGEN_OK) return;
  std::cerr << "fedgen " << command << ": " << fedgen_last_error() << '\n';
  throw Failure{exit_code(s)};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ConfigPtr = std::unique_ptr<fedgen_config, Deleter<fedgen_config, fedgen_config_free>>;
using CohortsPtr = std::unique_ptr<fedgen_cohorts, Deleter<fedgen_cohorts, fedgen_cohorts_free>>;
using RunPtr = std::unique_ptr<fedgen_run, Deleter<fedgen_run, fedgen_run_free>>;

ConfigPtr load_config(const std::string& path, const std::string& command) {
  fedgen_config* c = nullptr;
  check(fedgen_config_load(path.empty() ? nullptr : path.c_str(), &c), command);
  return ConfigPtr(c);
}

void print_file(const std::string& path) {
  std::ifstream is(path);
  std::cout << is.rdbuf();
}

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string mode;
  std::optional<uint64_t> seed;
  std::string real;
  std::string synthetic;
  std::string holdout;
  std::vector<std::string> runs;
};

int generate_data(const Options& o) {
  const auto config = load_config(o.config, "generate-data");
  fedgen_cohorts* raw = nullptr;
  check(fedgen_cohorts_generate(config.get(), &raw), "generate-data");
  const CohortsPtr cohorts(raw);
  check(fedgen_cohorts_save(cohorts.get(), o.out.c_str()), "generate-data");
  size_t k = 0;
  check(fedgen_cohorts_count(cohorts.get(), &k), "generate-data");
  std::cout << "wrote " << k << " hospitals x 3 splits to " << o.out << '\n';
  return kExitOk;
}

int run(const Options& o) {
  const auto config = load_config(o.config, "run");
  if (!o.mode.empty()) check(fedgen_config_set_mode(config.get(), o.mode.c_str()), "run");
  if (o.seed) check(fedgen_config_set_seed(config.get(), *o.seed), "run");
  fedgen_cohorts* raw = nullptr;
  if (o.data.empty()) {
    check(fedgen_cohorts_generate(config.get(), &raw), "run");
  } else {
    check(fedgen_cohorts_load(o.data.c_str(), &raw), "run");
  }
  const CohortsPtr cohorts(raw);
  fedgen_run* run_raw = nullptr;
  check(fedgen_run_experiment(config.get(), cohorts.get(), o.out.c_str(), &run_raw), "run");
  const RunPtr result(run_raw);
  size_t n = 0;
  check(fedgen_run_metric_count(result.get(), &n), "run");
  for (size_t i = 0; i < n; ++i) {
    const char* metric = nullptr;
    const char* regime = nullptr;
    double value = 0.0;
    check(fedgen_run_metric(result.get(), i, &metric, &regime, &value), "run");
    std::printf("%-6s %-9s %.6f\n", metric, regime, value);
  }
  return kExitOk;
}

int evaluate(const Options& o) {
  const auto config = load_config(o.config, "evaluate");
  uint64_t seed = 0;
  check(fedgen_config_get_seed(config.get(), &seed), "evaluate");
  if (o.seed) seed = *o.seed;
  check(fedgen_evaluate_files(config.get(), o.real.c_str(), o.synthetic.c_str(),
                              o.holdout.empty() ? nullptr : o.holdout.c_str(), seed, o.out.c_str()),
        "evaluate");
  print_file(o.out);
  return kExitOk;
}

int compare(const Options& o) {
  std::vector<const char*> dirs;
  for (const auto& r : o.runs) dirs.push_back(r.c_str());
  check(fedgen_compare_runs(dirs.data(), dirs.size(), o.out.c_str()), "compare");
  print_file(o.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage federated generator for multi-hot EHR sequences"};
  app.set_version_flag("--version", fedgen_version());
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate-data", "Write synthetic hospital cohorts and a manifest");
  gen->add_option("--config", o.config, "Configuration file (defaults when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* runc = app.add_subcommand("run", "Run one mode end to end into a run directory");
  runc->add_option("--config", o.config, "Configuration file (defaults when omitted)")->check(CLI::ExistingFile);
  runc->add_option("--mode", o.mode, "fedehr_gen, fedavg, fedehr_no_ma, fedehr_no_da or centralized");
  runc->add_option("--seed", o.seed, "Run seed (overrides [run] seed)");
  runc->add_option("--data", o.data, "Cohort directory from generate-data (generated from [data] when omitted)");
  runc->add_option("--out", o.out, "Run directory")->required();

  auto* evalc = app.add_subcommand("evaluate", "Fidelity and privacy of a synthetic tensor file");
  evalc->add_option("--real", o.real, "Real tensor file")->required();
  evalc->add_option("--synthetic", o.synthetic, "Synthetic tensor file")->required();
  evalc->add_option("--holdout", o.holdout, "Held-out real tensor file, enables membership inference");
  evalc->add_option("--config", o.config, "Configuration file for [eval] settings")->check(CLI::ExistingFile);
  evalc->add_option("--seed", o.seed, "Subsampling seed");
  evalc->add_option("--out", o.out, "Metrics CSV")->required();

  auto* cmp = app.add_subcommand("compare", "Tabulate mean and std per mode over run directories");
  cmp->add_option("runs", o.runs, "Run directories")->required();
  cmp->add_option("--out", o.out, "Summary CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return generate_data(o);
    if (runc->parsed()) return run(o);
    if (evalc->parsed()) return evaluate(o);
    return compare(o);
  } catch (const Failure& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "fedgen: " << e.what() << '\n';
    return kExitRuntime;
  }
}
