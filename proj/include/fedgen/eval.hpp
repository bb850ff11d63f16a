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

// Fidelity (R^2, MMD, prevalence), downstream utility (logistic regression
// scored by AUROC / AUPRC) and privacy (membership advantage, nearest
// neighbour adversarial accuracy) of synthetic cohorts.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedgen/nn.hpp"
#include "fedgen/synthdata.hpp"

namespace fedgen::eval {

using data::BinarySequenceTensor;

// ---------------------------------------------------------------- fidelity

// T x D matrix of per-(t, d) means over samples.
nn::Matrix timestep_prevalence(const BinarySequenceTensor& x);
// Per-feature mean over (n, t).
nn::Vector prevalence(const BinarySequenceTensor& x);

// 1 - sum (mu_real - mu_syn)^2 / sum (mu_real - mean(mu_real))^2 over (t, d).
double r2_fidelity(const BinarySequenceTensor& real, const BinarySequenceTensor& syn);

// Samples flattened to T*D bits and packed 64 per word.
class PackedSamples {
 public:
  PackedSamples() = default;
  explicit PackedSamples(const BinarySequenceTensor& x);
  PackedSamples(const BinarySequenceTensor& x, std::span<const size_t> indices);

  size_t size() const { return count_; }
  size_t bits_per_sample() const { return bits_; }
  std::span<const uint64_t> sample(size_t i) const { return {words_.data() + i * stride_, stride_}; }

 private:
  size_t count_ = 0, bits_ = 0, stride_ = 0;
  std::vector<uint64_t> words_;
};

uint32_t hamming(std::span<const uint64_t> a, std::span<const uint64_t> b);

// Squared MMD (all-pairs form) with kernel exp(-||x - y||^2 / h), where h
// is the median squared distance over distinct pairs of the pooled sample.
// For binary data ||x - y||^2 is the Hamming distance.
double mmd_packed(const PackedSamples& a, const PackedSamples& b);

// Subsamples each side to at most `cap` samples using `seed`.
double mmd(const BinarySequenceTensor& real, const BinarySequenceTensor& syn, uint64_t seed,
           size_t cap = 1000);

struct FidelityReport {
  double r2 = 0.0;
  double mmd = 0.0;
  nn::Vector prevalence_real, prevalence_syn;
  nn::Matrix timestep_prevalence_real, timestep_prevalence_syn;
};

FidelityReport fidelity(const BinarySequenceTensor& real, const BinarySequenceTensor& syn,
                        uint64_t seed, size_t mmd_cap = 1000);

// ----------------------------------------------------------------- utility

// N x D time-pooled feature means.
nn::Matrix pooled_features(const BinarySequenceTensor& x);

struct LabeledFeatures {
  nn::Matrix x;
  std::vector<uint8_t> y;
};

LabeledFeatures labeled_features(const BinarySequenceTensor& x);

struct LogisticOptions {
  double l2 = 1e-2;
  size_t max_iterations = 3000;
  double gradient_tolerance = 1e-6;
  // Federated training: rounds of local gradient steps followed by an
  // N-weighted average.
  size_t federated_rounds = 100;
  size_t local_steps = 10;
};

// Logistic regression on standardized inputs.
struct LogisticModel {
  nn::Vector weights;
  double bias = 0.0;
  nn::Vector center, scale;

  std::vector<double> predict(const nn::Matrix& x) const;
};

// Full-batch gradient descent with step 1 / L (L bounds the Hessian).
// Throws DataError when the training set holds a single class.
LogisticModel train_logistic(const LabeledFeatures& train, const LogisticOptions& options);

// FedAvg over the per-hospital sets; standardization uses pooled moments
// assembled from per-hospital sums.
LogisticModel train_logistic_federated(std::span<const LabeledFeatures> hospitals,
                                       const LogisticOptions& options);

// Rank statistic with average ranks for ties.
double auroc(std::span<const double> scores, std::span<const uint8_t> labels);
// Average precision: sum over distinct thresholds of (R_i - R_{i-1}) P_i.
double auprc(std::span<const double> scores, std::span<const uint8_t> labels);

struct UtilityScores {
  double auroc = 0.0;
  double auprc = 0.0;
};

UtilityScores score_downstream(const LogisticModel& model, const LabeledFeatures& test);

// ----------------------------------------------------------------- privacy

// Attack advantage of a distance-to-nearest-synthetic threshold attacker.
// The threshold is fit on one half of (members, holdout) and the advantage
// reported on the other half.
double mir(const BinarySequenceTensor& members, const BinarySequenceTensor& holdout,
           const BinarySequenceTensor& syn, uint64_t seed);

// Fraction of synthetic samples whose nearest neighbour in
// real + (syn without itself) is real; ties count as synthetic.
double nnaa_packed(const PackedSamples& real, const PackedSamples& syn);

// Both sides subsampled to min(|real|, |syn|, cap) samples.
double nnaa(const BinarySequenceTensor& real, const BinarySequenceTensor& syn, uint64_t seed,
            size_t cap = 1000);

struct PrivacyReport {
  double mir = 0.0;
  double nnaa = 0.0;
};

// Flattened samples (one row per sample, T*D 0/1 columns, a leading
// source column) for external embedding tools.
void export_flat_csv(const std::filesystem::path& path, const BinarySequenceTensor& real,
                     const BinarySequenceTensor& syn, size_t cap, uint64_t seed);

}  // namespace fedgen::eval
