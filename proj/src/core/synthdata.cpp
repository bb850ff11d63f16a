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

#include "fedgen/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "fedgen/errors.hpp"

namespace fedgen::data {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

namespace {

enum : uint64_t { kStreamFactors = 1, kStreamBits = 2, kStreamLabels = 3, kStreamPilot = 4 };

constexpr size_t kCalibrationPatients = 192;
constexpr size_t kPilotPatients = 4096;

}  // namespace

// ----------------------------------------------------------------- tensor

BinarySequenceTensor::BinarySequenceTensor(size_t samples, size_t timesteps, size_t features)
    : samples_(samples),
      timesteps_(timesteps),
      features_(features),
      bits_(samples * timesteps * features, 0),
      labels_(samples, 0) {}

BinarySequenceTensor::BinarySequenceTensor(size_t samples, size_t timesteps, size_t features,
                                           std::vector<uint8_t> bits, std::vector<uint8_t> labels)
    : samples_(samples),
      timesteps_(timesteps),
      features_(features),
      bits_(std::move(bits)),
      labels_(std::move(labels)) {
  if (bits_.size() != samples * timesteps * features) {
    throw DimensionError("BinarySequenceTensor: payload of " + std::to_string(bits_.size()) +
                         " elements does not match shape " + std::to_string(samples) + "x" +
                         std::to_string(timesteps) + "x" + std::to_string(features));
  }
  if (labels_.size() != samples) {
    throw DimensionError("BinarySequenceTensor: " + std::to_string(labels_.size()) +
                         " labels for " + std::to_string(samples) + " samples");
  }
  for (uint8_t b : bits_) {
    if (b > 1) throw InvalidArgument("BinarySequenceTensor: element outside {0,1}");
  }
  for (uint8_t y : labels_) {
    if (y > 1) throw InvalidArgument("BinarySequenceTensor: label outside {0,1}");
  }
}

void BinarySequenceTensor::set_label(size_t n, uint8_t y) {
  if (y > 1) throw InvalidArgument("BinarySequenceTensor: label outside {0,1}");
  labels_[n] = y;
}

double BinarySequenceTensor::density() const {
  if (bits_.empty()) return 0.0;
  const size_t ones = static_cast<size_t>(std::count(bits_.begin(), bits_.end(), uint8_t{1}));
  return static_cast<double>(ones) / static_cast<double>(bits_.size());
}

double BinarySequenceTensor::positive_rate() const {
  if (labels_.empty()) return 0.0;
  const size_t pos = static_cast<size_t>(std::count(labels_.begin(), labels_.end(), uint8_t{1}));
  return static_cast<double>(pos) / static_cast<double>(labels_.size());
}

BinarySequenceTensor BinarySequenceTensor::select(std::span<const size_t> indices) const {
  BinarySequenceTensor out(indices.size(), timesteps_, features_);
  const size_t stride = timesteps_ * features_;
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= samples_) throw InvalidArgument("select: sample index out of range");
    std::copy_n(bits_.begin() + static_cast<std::ptrdiff_t>(indices[i] * stride), stride,
                out.bits_.begin() + static_cast<std::ptrdiff_t>(i * stride));
    out.labels_[i] = labels_[indices[i]];
  }
  return out;
}

BinarySequenceTensor BinarySequenceTensor::concat(std::span<const BinarySequenceTensor> parts) {
  if (parts.empty()) return {};
  const size_t t = parts[0].timesteps_;
  const size_t d = parts[0].features_;
  size_t n = 0;
  for (const auto& p : parts) {
    if (p.timesteps_ != t || p.features_ != d) {
      throw DimensionError("concat: tensors disagree on (T, D)");
    }
    n += p.samples_;
  }
  BinarySequenceTensor out(n, t, d);
  size_t at = 0, lab = 0;
  for (const auto& p : parts) {
    std::copy(p.bits_.begin(), p.bits_.end(), out.bits_.begin() + static_cast<std::ptrdiff_t>(at));
    std::copy(p.labels_.begin(), p.labels_.end(),
              out.labels_.begin() + static_cast<std::ptrdiff_t>(lab));
    at += p.bits_.size();
    lab += p.labels_.size();
  }
  return out;
}

nn::SparseRows BinarySequenceTensor::sparse_rows() const {
  nn::SparseRows rows;
  rows.width = static_cast<nn::Index>(features_);
  const size_t n_rows = samples_ * timesteps_;
  rows.offsets.reserve(n_rows + 1);
  for (size_t r = 0; r < n_rows; ++r) {
    const uint8_t* p = bits_.data() + r * features_;
    for (size_t d = 0; d < features_; ++d) {
      if (p[d] != 0) rows.indices.push_back(static_cast<int32_t>(d));
    }
    rows.offsets.push_back(static_cast<int64_t>(rows.indices.size()));
  }
  return rows;
}

// ------------------------------------------------------------- generator

GlobalFactorBank make_factor_bank(size_t features, size_t timesteps, size_t factors,
                                  uint64_t seed) {
  if (features == 0 || timesteps == 0 || factors == 0) {
    throw InvalidArgument("make_factor_bank: dimensions must be positive");
  }
  Rng rng = make_rng(seed, {0xfac7});
  std::normal_distribution<double> normal(0.0, 1.0);

  GlobalFactorBank bank;
  bank.features = features;
  bank.timesteps = timesteps;
  bank.factors = factors;
  bank.loadings = nn::Matrix(static_cast<nn::Index>(features), static_cast<nn::Index>(factors));
  const double loading_scale = 1.5 / std::sqrt(static_cast<double>(factors));
  for (nn::Index i = 0; i < bank.loadings.size(); ++i) {
    bank.loadings.data()[i] = loading_scale * normal(rng);
  }

  // Zipf-like feature frequencies with a random rank assignment.
  std::vector<size_t> rank(features);
  std::iota(rank.begin(), rank.end(), size_t{0});
  std::shuffle(rank.begin(), rank.end(), rng);
  bank.base_logit = nn::Vector(static_cast<nn::Index>(features));
  for (size_t d = 0; d < features; ++d) {
    bank.base_logit[static_cast<nn::Index>(d)] = -0.9 * std::log(1.0 + static_cast<double>(rank[d]));
  }

  bank.drift_direction = nn::Vector(static_cast<nn::Index>(factors));
  bank.label_weights = nn::Vector(static_cast<nn::Index>(factors));
  for (size_t f = 0; f < factors; ++f) bank.drift_direction[static_cast<nn::Index>(f)] = normal(rng);
  bank.drift_direction /= bank.drift_direction.norm();
  for (size_t f = 0; f < factors; ++f) bank.label_weights[static_cast<nn::Index>(f)] = normal(rng);
  bank.label_weights *= 2.5 / bank.label_weights.norm();
  return bank;
}

void HospitalCohortSpec::validate(const GlobalFactorBank& bank) const {
  if (!(sparsity > 0.0 && sparsity <= 0.5)) {
    throw InvalidArgument("cohort spec: sparsity must lie in (0, 0.5]");
  }
  if (!(label_prevalence > 0.0 && label_prevalence < 1.0)) {
    throw InvalidArgument("cohort spec: label prevalence must lie in (0, 1)");
  }
  if (!covariate_offset.empty() && covariate_offset.size() != bank.features) {
    throw InvalidArgument("cohort spec: covariate offset has " +
                          std::to_string(covariate_offset.size()) + " entries, expected " +
                          std::to_string(bank.features));
  }
  if (!std::isfinite(temporal_shift)) {
    throw InvalidArgument("cohort spec: temporal shift must be finite");
  }
  for (double v : covariate_offset) {
    if (!std::isfinite(v)) throw InvalidArgument("cohort spec: non-finite covariate offset");
  }
}

std::vector<double> make_covariate_offset(size_t features, double scale, uint64_t seed) {
  Rng rng = make_rng(seed, {0xc0f});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(features);
  for (auto& v : out) v = scale * normal(rng);
  return out;
}

namespace {

// Factor trajectories for `n` patients, row (i * T + t).
nn::Matrix sample_factors(const GlobalFactorBank& bank, double temporal_shift, size_t n, Rng& rng) {
  const auto T = bank.timesteps;
  const auto F = static_cast<nn::Index>(bank.factors);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double rho = bank.persistence;
  const double innovation = std::sqrt(1.0 - rho * rho);
  nn::Matrix f(static_cast<nn::Index>(n * T), F);
  nn::Vector g(F);
  for (size_t i = 0; i < n; ++i) {
    for (nn::Index k = 0; k < F; ++k) g[k] = normal(rng);
    for (size_t t = 0; t < T; ++t) {
      if (t > 0) {
        for (nn::Index k = 0; k < F; ++k) g[k] = rho * g[k] + innovation * normal(rng);
      }
      const double progress = T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 0.0;
      f.row(static_cast<nn::Index>(i * T + t)) =
          (g + temporal_shift * progress * bank.drift_direction).transpose();
    }
  }
  return f;
}

nn::Vector label_scores(const GlobalFactorBank& bank, const nn::Matrix& factors, size_t n,
                        Rng& noise_rng) {
  const auto T = static_cast<nn::Index>(bank.timesteps);
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  nn::Vector scores(static_cast<nn::Index>(n));
  for (size_t i = 0; i < n; ++i) {
    const nn::Vector mean = factors.middleRows(static_cast<nn::Index>(i) * T, T).colwise().mean();
    const double p = u(noise_rng);
    scores[static_cast<nn::Index>(i)] = bank.label_weights.dot(mean) + std::log(p / (1.0 - p));
  }
  return scores;
}

}  // namespace

BinarySequenceTensor generate_cohort(const HospitalCohortSpec& spec, const GlobalFactorBank& bank) {
  spec.validate(bank);
  const size_t n = spec.n_samples;
  const size_t T = bank.timesteps;
  const size_t D = bank.features;

  Rng factor_rng = make_rng(spec.seed, {kStreamFactors});
  const nn::Matrix factors = sample_factors(bank, spec.temporal_shift, n, factor_rng);

  nn::Vector offset = bank.base_logit;
  if (!spec.covariate_offset.empty()) {
    offset += Eigen::Map<const nn::Vector>(spec.covariate_offset.data(),
                                           static_cast<nn::Index>(D));
  }
  nn::Matrix logits = factors * bank.loadings.transpose();  // (n*T) x D
  logits.rowwise() += offset.transpose();

  // Intercept such that the mean Bernoulli parameter over a calibration
  // subset hits the sparsity target.
  const nn::Index calib_rows =
      static_cast<nn::Index>(std::min(n, kCalibrationPatients) * T);
  auto mean_prob = [&](double intercept) {
    double s = 0.0;
    for (nn::Index r = 0; r < calib_rows; ++r) {
      for (nn::Index d = 0; d < logits.cols(); ++d) s += nn::sigmoid(logits(r, d) + intercept);
    }
    return s / static_cast<double>(calib_rows * logits.cols());
  };
  double intercept = 0.0;
  if (calib_rows > 0) {
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mean_prob(mid) < spec.sparsity ? lo : hi) = mid;
    }
    intercept = 0.5 * (lo + hi);
  }

  std::vector<uint8_t> bits(n * T * D);
  Rng bit_rng = make_rng(spec.seed, {kStreamBits});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (nn::Index r = 0; r < logits.rows(); ++r) {
    for (nn::Index d = 0; d < logits.cols(); ++d) {
      const double p = nn::sigmoid(logits(r, d) + intercept);
      bits[static_cast<size_t>(r) * D + static_cast<size_t>(d)] = u(bit_rng) < p ? 1 : 0;
    }
  }

  // Label threshold from a pilot sample of the same process.
  Rng pilot_rng = make_rng(spec.seed, {kStreamPilot});
  const nn::Matrix pilot_factors = sample_factors(bank, spec.temporal_shift, kPilotPatients, pilot_rng);
  nn::Vector pilot = label_scores(bank, pilot_factors, kPilotPatients, pilot_rng);
  std::vector<double> sorted(pilot.data(), pilot.data() + pilot.size());
  std::sort(sorted.begin(), sorted.end());
  const auto q = static_cast<size_t>(
      std::clamp((1.0 - spec.label_prevalence) * static_cast<double>(sorted.size()), 0.0,
                 static_cast<double>(sorted.size() - 1)));
  const double threshold = sorted[q];

  Rng label_rng = make_rng(spec.seed, {kStreamLabels});
  const nn::Vector scores = label_scores(bank, factors, n, label_rng);
  std::vector<uint8_t> labels(n);
  for (size_t i = 0; i < n; ++i) labels[i] = scores[static_cast<nn::Index>(i)] > threshold ? 1 : 0;

  return BinarySequenceTensor(n, T, D, std::move(bits), std::move(labels));
}

// ------------------------------------------------------------------ split

namespace {

// Splits `size` slots across classes proportionally, giving each class with
// at least three members one slot, and never taking a class's last member.
std::vector<size_t> allocate(size_t size, const std::vector<size_t>& class_counts,
                             const std::vector<size_t>& capacity) {
  const double total = static_cast<double>(
      std::accumulate(class_counts.begin(), class_counts.end(), size_t{0}));
  const size_t k = class_counts.size();
  std::vector<size_t> out(k, 0);
  std::vector<double> quota(k, 0.0);
  for (size_t c = 0; c < k; ++c) {
    quota[c] = static_cast<double>(size) * static_cast<double>(class_counts[c]) / total;
    out[c] = std::min(capacity[c], static_cast<size_t>(std::floor(quota[c])));
    if (out[c] == 0 && class_counts[c] >= 3 && capacity[c] > 0) out[c] = 1;
  }
  auto sum = [&] { return std::accumulate(out.begin(), out.end(), size_t{0}); };
  while (sum() < size) {
    size_t best = k;
    double best_rem = -std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < k; ++c) {
      if (out[c] >= capacity[c]) continue;
      const double rem = quota[c] - static_cast<double>(out[c]);
      if (rem > best_rem) { best_rem = rem; best = c; }
    }
    if (best == k) break;
    ++out[best];
  }
  while (sum() > size) {
    size_t best = 0;
    for (size_t c = 1; c < k; ++c) if (out[c] > out[best]) best = c;
    --out[best];
  }
  return out;
}

}  // namespace

CohortSplit split_cohort(const BinarySequenceTensor& tensor, std::array<double, 3> ratios,
                         uint64_t seed) {
  const double ratio_sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(ratio_sum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw InvalidArgument("split_cohort: ratios must be non-negative and sum to 1");
  }
  const size_t n = tensor.samples();
  if (n < 10) throw DataError("split_cohort: need at least 10 samples, got " + std::to_string(n));

  std::array<std::vector<size_t>, 2> by_class;
  for (size_t i = 0; i < n; ++i) by_class[tensor.label(i)].push_back(i);
  Rng rng = make_rng(seed, {0x5b1});
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

  std::vector<size_t> counts{by_class[0].size(), by_class[1].size()};
  const size_t classes = static_cast<size_t>(!by_class[0].empty()) + static_cast<size_t>(!by_class[1].empty());
  auto split_size = [&](double r) {
    if (r == 0.0) return size_t{0};
    return std::max(static_cast<size_t>(std::floor(r * static_cast<double>(n))), classes);
  };
  // Keep one member of each class back for training.
  std::vector<size_t> capacity{counts[0] > 0 ? counts[0] - 1 : 0, counts[1] > 0 ? counts[1] - 1 : 0};
  const auto val_alloc = allocate(split_size(ratios[1]), counts, capacity);
  for (size_t c = 0; c < 2; ++c) capacity[c] -= val_alloc[c];
  const auto test_alloc = allocate(split_size(ratios[2]), counts, capacity);

  CohortSplit out;
  for (size_t c = 0; c < 2; ++c) {
    const auto& m = by_class[c];
    size_t at = 0;
    for (size_t i = 0; i < val_alloc[c]; ++i) out.val_index.push_back(m[at++]);
    for (size_t i = 0; i < test_alloc[c]; ++i) out.test_index.push_back(m[at++]);
    while (at < m.size()) out.train_index.push_back(m[at++]);
  }
  std::sort(out.train_index.begin(), out.train_index.end());
  std::sort(out.val_index.begin(), out.val_index.end());
  std::sort(out.test_index.begin(), out.test_index.end());
  out.train = tensor.select(out.train_index);
  out.val = tensor.select(out.val_index);
  out.test = tensor.select(out.test_index);
  return out;
}

// -------------------------------------------------------------- file I/O

namespace {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw FormatError("tensor file " + path.string() + ": truncated header");
  }
  return v;
}

void write_header(std::ostream& os, uint64_t n, uint64_t t, uint64_t d, PayloadKind kind) {
  os.write(kTensorMagic, sizeof(kTensorMagic));
  put<uint64_t>(os, n);
  put<uint64_t>(os, t);
  put<uint64_t>(os, d);
  put<uint8_t>(os, static_cast<uint8_t>(kind));
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  return os;
}

bool checked_product(uint64_t a, uint64_t b, uint64_t& out) {
  if (a != 0 && b > std::numeric_limits<uint64_t>::max() / a) return false;
  out = a * b;
  return true;
}

struct OpenedTensor {
  std::ifstream stream;
  TensorFileHeader header;
  uint64_t elements = 0;
};

OpenedTensor open_tensor(const std::filesystem::path& path) {
  OpenedTensor t;
  t.stream.open(path, std::ios::binary);
  if (!t.stream) throw DataError("cannot open tensor file " + path.string());
  char magic[8];
  if (!t.stream.read(magic, sizeof(magic))) {
    throw FormatError("tensor file " + path.string() + ": truncated header");
  }
  if (std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) {
    throw FormatError("tensor file " + path.string() + ": bad magic");
  }
  t.header.samples = get<uint64_t>(t.stream, path);
  t.header.timesteps = get<uint64_t>(t.stream, path);
  t.header.features = get<uint64_t>(t.stream, path);
  const auto flag = get<uint8_t>(t.stream, path);
  if (flag > 1) {
    throw FormatError("tensor file " + path.string() + ": unknown payload flag " +
                      std::to_string(flag));
  }
  t.header.kind = static_cast<PayloadKind>(flag);
  uint64_t nt = 0;
  if (!checked_product(t.header.samples, t.header.timesteps, nt) ||
      !checked_product(nt, t.header.features, t.elements) ||
      (t.header.kind == PayloadKind::kFloat64 && t.elements > std::numeric_limits<uint64_t>::max() / 8)) {
    throw FormatError("tensor file " + path.string() + ": dimensions overflow");
  }
  const auto actual = std::filesystem::file_size(path);
  if (actual != expected_file_size(t.header)) {
    throw FormatError("tensor file " + path.string() + ": size " + std::to_string(actual) +
                      " bytes, header implies " + std::to_string(expected_file_size(t.header)));
  }
  return t;
}

std::vector<uint8_t> read_labels(OpenedTensor& t, const std::filesystem::path& path) {
  std::vector<uint8_t> labels(t.header.samples);
  if (!t.stream.read(reinterpret_cast<char*>(labels.data()),
                     static_cast<std::streamsize>(labels.size()))) {
    throw FormatError("tensor file " + path.string() + ": truncated labels");
  }
  return labels;
}

std::vector<uint8_t> read_packed(OpenedTensor& t, const std::filesystem::path& path) {
  std::vector<uint8_t> packed((t.elements + 7) / 8);
  if (!t.stream.read(reinterpret_cast<char*>(packed.data()),
                     static_cast<std::streamsize>(packed.size()))) {
    throw FormatError("tensor file " + path.string() + ": truncated payload");
  }
  std::vector<uint8_t> bits(t.elements);
  for (uint64_t i = 0; i < t.elements; ++i) bits[i] = (packed[i >> 3] >> (i & 7)) & 1u;
  return bits;
}

}  // namespace

uint64_t expected_file_size(const TensorFileHeader& h) {
  const uint64_t elements = h.samples * h.timesteps * h.features;
  const uint64_t payload = h.kind == PayloadKind::kPackedBits ? (elements + 7) / 8 : elements * 8;
  return 8 + 24 + 1 + payload + h.samples;
}

void write_tensor(const std::filesystem::path& path, const BinarySequenceTensor& tensor) {
  auto os = open_out(path);
  write_header(os, tensor.samples(), tensor.timesteps(), tensor.features(), PayloadKind::kPackedBits);
  const auto bits = tensor.bits();
  std::vector<uint8_t> packed((bits.size() + 7) / 8, 0);
  for (size_t i = 0; i < bits.size(); ++i) packed[i >> 3] |= static_cast<uint8_t>(bits[i] << (i & 7));
  os.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  os.write(reinterpret_cast<const char*>(tensor.labels().data()),
           static_cast<std::streamsize>(tensor.labels().size()));
  if (!os) throw DataError("failed writing " + path.string());
}

void write_tensor(const std::filesystem::path& path, const RealSequenceTensor& tensor) {
  if (tensor.values.size() != tensor.samples * tensor.timesteps * tensor.features ||
      tensor.labels.size() != tensor.samples) {
    throw DimensionError("write_tensor: payload does not match shape");
  }
  auto os = open_out(path);
  write_header(os, tensor.samples, tensor.timesteps, tensor.features, PayloadKind::kFloat64);
  os.write(reinterpret_cast<const char*>(tensor.values.data()),
           static_cast<std::streamsize>(tensor.values.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(tensor.labels.data()),
           static_cast<std::streamsize>(tensor.labels.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

TensorFileHeader read_tensor_header(const std::filesystem::path& path) {
  return open_tensor(path).header;
}

BinarySequenceTensor read_tensor(const std::filesystem::path& path) {
  auto t = open_tensor(path);
  if (t.header.kind != PayloadKind::kPackedBits) {
    throw FormatError("tensor file " + path.string() + ": expected a packed-bit payload");
  }
  auto bits = read_packed(t, path);
  auto labels = read_labels(t, path);
  for (uint8_t y : labels) {
    if (y > 1) throw FormatError("tensor file " + path.string() + ": label outside {0,1}");
  }
  return BinarySequenceTensor(t.header.samples, t.header.timesteps, t.header.features,
                              std::move(bits), std::move(labels));
}

RealSequenceTensor read_real_tensor(const std::filesystem::path& path) {
  auto t = open_tensor(path);
  RealSequenceTensor out;
  out.samples = t.header.samples;
  out.timesteps = t.header.timesteps;
  out.features = t.header.features;
  if (t.header.kind == PayloadKind::kPackedBits) {
    const auto bits = read_packed(t, path);
    out.values.assign(bits.begin(), bits.end());
  } else {
    out.values.resize(t.elements);
    if (!t.stream.read(reinterpret_cast<char*>(out.values.data()),
                       static_cast<std::streamsize>(t.elements * sizeof(double)))) {
      throw FormatError("tensor file " + path.string() + ": truncated payload");
    }
  }
  out.labels = read_labels(t, path);
  return out;
}

}  // namespace fedgen::data
