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

// Multi-hot sequence tensors, the synthetic multi-hospital cohort generator
// and the on-disk tensor container.
//
// Cohorts come from a shared-factor Bernoulli state-space model: every
// patient carries a low-dimensional AR(1) factor trajectory; features are
// Bernoulli draws whose logits combine a shared loading matrix, a shared
// power-law frequency profile, a hospital-specific covariate offset, and a
// calibrated intercept. Hospitals differ by covariate offset (feature
// prevalence shift) and temporal shift (a time-increasing drift of the
// factor mean).

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedgen/nn.hpp"

namespace fedgen::data {

// N x T x D binary tensor with one label per sample. Element (n, t, d) lives
// at flat index (n * T + t) * D + d.
class BinarySequenceTensor {
 public:
  BinarySequenceTensor() = default;
  BinarySequenceTensor(size_t samples, size_t timesteps, size_t features);
  // Takes ownership of 0/1 bytes; throws when sizes disagree or a value is
  // not 0/1.
  BinarySequenceTensor(size_t samples, size_t timesteps, size_t features,
                       std::vector<uint8_t> bits, std::vector<uint8_t> labels);

  size_t samples() const { return samples_; }
  size_t timesteps() const { return timesteps_; }
  size_t features() const { return features_; }
  size_t element_count() const { return bits_.size(); }
  bool empty() const { return samples_ == 0; }

  uint8_t at(size_t n, size_t t, size_t d) const { return bits_[index(n, t, d)]; }
  void set(size_t n, size_t t, size_t d, bool value) { bits_[index(n, t, d)] = value ? 1 : 0; }

  // The D bytes of observation (n, t).
  std::span<const uint8_t> row(size_t n, size_t t) const {
    return {bits_.data() + (n * timesteps_ + t) * features_, features_};
  }
  // The T*D bytes of sample n.
  std::span<const uint8_t> sample(size_t n) const {
    return {bits_.data() + n * timesteps_ * features_, timesteps_ * features_};
  }
  std::span<const uint8_t> bits() const { return bits_; }

  const std::vector<uint8_t>& labels() const { return labels_; }
  uint8_t label(size_t n) const { return labels_[n]; }
  void set_label(size_t n, uint8_t y);

  // Fraction of ones.
  double density() const;
  double positive_rate() const;

  BinarySequenceTensor select(std::span<const size_t> indices) const;
  static BinarySequenceTensor concat(std::span<const BinarySequenceTensor> parts);

  // One row per observation (n, t), in flat order.
  nn::SparseRows sparse_rows() const;

  friend bool operator==(const BinarySequenceTensor&, const BinarySequenceTensor&) = default;

 private:
  size_t index(size_t n, size_t t, size_t d) const { return (n * timesteps_ + t) * features_ + d; }

  size_t samples_ = 0;
  size_t timesteps_ = 0;
  size_t features_ = 0;
  std::vector<uint8_t> bits_;
  std::vector<uint8_t> labels_;
};

// Shared structure of one experiment: every hospital draws from it.
struct GlobalFactorBank {
  size_t features = 0;
  size_t timesteps = 0;
  size_t factors = 0;
  nn::Matrix loadings;         // features x factors
  nn::Vector base_logit;       // power-law frequency profile, features
  nn::Vector drift_direction;  // factors
  nn::Vector label_weights;    // factors
  double persistence = 0.8;    // AR(1) coefficient of the factor process
};

GlobalFactorBank make_factor_bank(size_t features, size_t timesteps, size_t factors,
                                  uint64_t seed);

struct HospitalCohortSpec {
  int hospital_id = 0;
  size_t n_samples = 0;
  double sparsity = 0.05;                // target fraction of ones
  std::vector<double> covariate_offset;  // per-feature logit bias; empty = zero
  double temporal_shift = 0.0;           // drift of the factor mean by the last step
  double label_prevalence = 0.2;
  uint64_t seed = 0;

  // Throws InvalidArgument for out-of-domain fields.
  void validate(const GlobalFactorBank& bank) const;
};

// scale * N(0, 1) per feature, from its own seed.
std::vector<double> make_covariate_offset(size_t features, double scale, uint64_t seed);

// Pure function of (spec, bank); hospital_id does not enter the draw.
BinarySequenceTensor generate_cohort(const HospitalCohortSpec& spec, const GlobalFactorBank& bank);

struct CohortSplit {
  BinarySequenceTensor train, val, test;
  std::vector<size_t> train_index, val_index, test_index;
};

inline constexpr std::array<double, 3> kDefaultSplit{0.70, 0.15, 0.15};

// Label-stratified (train, val, test) split. Validation and test sizes are
// max(floor(r * N), number of classes present); the remainder goes to train.
CohortSplit split_cohort(const BinarySequenceTensor& tensor, std::array<double, 3> ratios,
                         uint64_t seed);

// ------------------------------------------------------------ tensor file
//
// Layout (little endian):
//   8 bytes   magic "FGSIMT01"
//   3 x u64   N, T, D
//   1 byte    payload flag: 0 = packed bits, 1 = fp64
//   payload   packed: ceil(N*T*D / 8) bytes, element i at bit (i % 8) of byte
//             i / 8 (LSB first); fp64: N*T*D IEEE-754 doubles
//   N bytes   labels

inline constexpr char kTensorMagic[8] = {'F', 'G', 'S', 'I', 'M', 'T', '0', '1'};

enum class PayloadKind : uint8_t { kPackedBits = 0, kFloat64 = 1 };

struct TensorFileHeader {
  uint64_t samples = 0, timesteps = 0, features = 0;
  PayloadKind kind = PayloadKind::kPackedBits;
};

// Real-valued N x T x D tensor (latents, parameter blobs).
struct RealSequenceTensor {
  size_t samples = 0, timesteps = 0, features = 0;
  std::vector<double> values;
  std::vector<uint8_t> labels;
};

void write_tensor(const std::filesystem::path& path, const BinarySequenceTensor& tensor);
void write_tensor(const std::filesystem::path& path, const RealSequenceTensor& tensor);

TensorFileHeader read_tensor_header(const std::filesystem::path& path);
// Requires a packed-bit payload.
BinarySequenceTensor read_tensor(const std::filesystem::path& path);
// Accepts either payload; packed bits are widened to 0.0 / 1.0.
RealSequenceTensor read_real_tensor(const std::filesystem::path& path);

uint64_t expected_file_size(const TensorFileHeader& header);

}  // namespace fedgen::data
