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

// End-to-end runs: federation, synthetic cohorts per hospital, and the
// metric table; optional run directory with checkpoints and logs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedgen/config.hpp"
#include "fedgen/eval.hpp"
#include "fedgen/federation.hpp"

namespace fedgen::exp {

struct MetricRow {
  std::string metric;
  std::string regime;
  double value = 0.0;
  uint64_t seed = 0;
};

// One synthetic cohort per real hospital, sized like its training split
// with its training label prevalence. Centralized runs decode every
// hospital with the single pooled decoder.
std::vector<data::BinarySequenceTensor> generate_cohorts(const fed::FederationResult& run,
                                                         std::span<const data::CohortSplit> cohorts,
                                                         uint64_t seed, const fed::GenerationOptions& options);

// Fidelity (pooled real train vs pooled synthetic), downstream utility of
// real / synth / hybrid training on the pooled real test split (federated
// logistic regression unless centralized), and privacy with the pooled
// real train as members and the pooled real test as holdout.
std::vector<MetricRow> evaluate(fed::Mode mode, std::span<const data::CohortSplit> cohorts,
                                std::span<const data::BinarySequenceTensor> synthetic,
                                const cfg::EvalConfig& config, uint64_t seed);

// Fidelity and privacy of one synthetic tensor against the real tensor it
// was trained on. Membership inference needs a held-out real tensor and is
// skipped without one.
std::vector<MetricRow> evaluate_pair(const data::BinarySequenceTensor& real, const data::BinarySequenceTensor& syn,
                                     const cfg::EvalConfig& config, uint64_t seed,
                                     const data::BinarySequenceTensor* holdout = nullptr);

double metric(std::span<const MetricRow> rows, const std::string& name, const std::string& regime);

struct RunOutput {
  fed::FederationResult federation;
  std::vector<data::BinarySequenceTensor> synthetic;
  std::vector<MetricRow> metrics;
};

struct Stage1Output {
  std::vector<fed::Client> clients;
  fed::Stage1Result result;
};

// Stage 1 for `config`. Modes with the same matching switch share it, so
// its output can seed several finish_run calls. Writes stage1/ checkpoints
// and the stage-1 round log when `out` is non-empty.
Stage1Output run_stage1(const fed::FederationConfig& config, std::span<const data::CohortSplit> cohorts,
                        const std::filesystem::path& out = {});

// Stage 2, generation and evaluation on clients that finished stage 1.
RunOutput finish_run(const cfg::ExperimentConfig& config, Stage1Output stage1,
                     std::span<const data::CohortSplit> cohorts, const std::filesystem::path& out = {});

// Everything; writes the run directory when `out` is non-empty.
RunOutput run_experiment(const cfg::ExperimentConfig& config, std::span<const data::CohortSplit> cohorts,
                         const std::filesystem::path& out = {});

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);
void write_round_log(const std::filesystem::path& path, std::span<const fed::RoundRecord> records);

// Writes train/val/test tensors per hospital plus manifest.json.
void write_cohorts(const std::filesystem::path& dir, std::span<const data::CohortSplit> cohorts);
// Reads what write_cohorts wrote; throws DataError on missing files.
std::vector<data::CohortSplit> read_cohorts(const std::filesystem::path& dir);

struct SummaryRow {
  std::string mode;
  std::string metric;
  std::string regime;
  double mean = 0.0;
  // Sample standard deviation; 0 for a single run.
  double std = 0.0;
  size_t runs = 0;
};

// Groups metrics.csv of each run directory by (mode from run.json, metric,
// regime). Rows keep first-seen order of modes and metrics.
std::vector<SummaryRow> summarize_runs(std::span<const std::filesystem::path> run_dirs);
void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows);

}  // namespace fedgen::exp
