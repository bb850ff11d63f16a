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

// Experiment configuration: an INI document with sections [data],
// [stage1], [stage2], [eval] and [run]. Every key is optional; unknown
// sections and keys are rejected.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedgen/eval.hpp"
#include "fedgen/federation.hpp"
#include "fedgen/synthdata.hpp"

namespace fedgen::cfg {

struct DataConfig {
  std::vector<size_t> samples{1200, 700, 450, 350, 300};
  size_t timesteps = 16;
  size_t features = 256;
  size_t factors = 8;
  // Per-hospital lists; a single value applies to every hospital.
  std::vector<double> sparsity{0.05};
  std::vector<double> covariate_shift{0.3, 0.3, 0.3, 0.3, 1.5};
  std::vector<double> temporal_shift{0.0, 0.2, 0.4, 0.6, 2.0};
  std::vector<double> prevalence{0.2};
  std::array<double, 3> split = data::kDefaultSplit;
  uint64_t seed = 1;

  size_t hospitals() const { return samples.size(); }
  // Expands the per-hospital lists; throws ConfigError on length mismatch.
  std::vector<data::HospitalCohortSpec> hospital_specs() const;
};

struct EvalConfig {
  size_t mmd_cap = 1000;
  size_t nnaa_cap = 1000;
  eval::LogisticOptions logistic{};
  fed::GenerationOptions generation{};
  // Samples per side written to samples.csv; 0 disables the export.
  size_t export_samples = 0;
};

struct ExperimentConfig {
  DataConfig data;
  fed::FederationConfig federation;
  EvalConfig eval;
  // The document this was parsed from, for verbatim echo.
  std::string source;
};

// Throws ConfigError naming the section and key on unknown keys or
// malformed values.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Cohorts from [data]: a shared factor bank plus one split cohort per
// hospital, all seeded from data.seed.
std::vector<data::CohortSplit> make_cohorts(const DataConfig& data);

}  // namespace fedgen::cfg
