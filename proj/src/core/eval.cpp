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

#include "fedgen/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "fedgen/errors.hpp"
#include "fedgen/random.hpp"

namespace fedgen::eval {

namespace {

void require_same_layout(const BinarySequenceTensor& a, const BinarySequenceTensor& b,
                         const char* what) {
  if (a.timesteps() != b.timesteps() || a.features() != b.features()) {
    throw DimensionError(std::string(what) + ": (T, D) = (" + std::to_string(a.timesteps()) + ", " +
                         std::to_string(a.features()) + ") vs (" + std::to_string(b.timesteps()) +
                         ", " + std::to_string(b.features()) + ")");
  }
}

std::vector<size_t> subsample(size_t n, size_t cap, uint64_t seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  if (n <= cap) return idx;
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Nearest distance from every sample of `queries` to `pool`.
std::vector<uint32_t> nearest_distances(const PackedSamples& queries, const PackedSamples& pool) {
  std::vector<uint32_t> out(queries.size(), std::numeric_limits<uint32_t>::max());
  for (size_t i = 0; i < queries.size(); ++i) {
    const auto q = queries.sample(i);
    uint32_t best = std::numeric_limits<uint32_t>::max();
    for (size_t j = 0; j < pool.size() && best > 0; ++j) best = std::min(best, hamming(q, pool.sample(j)));
    out[i] = best;
  }
  return out;
}

double log1p_exp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Moments {
  double n = 0.0;
  nn::Vector sum, sumsq;
};

Moments feature_moments(const nn::Matrix& x) {
  return {static_cast<double>(x.rows()), x.colwise().sum().transpose(),
          x.array().square().colwise().sum().transpose()};
}

void set_standardization(LogisticModel& m, const Moments& mom) {
  m.center = mom.sum / mom.n;
  nn::Vector var = (mom.sumsq / mom.n - m.center.cwiseProduct(m.center)).cwiseMax(0.0);
  m.scale = var.cwiseSqrt().unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; });
}

nn::Matrix standardize(const LogisticModel& m, const nn::Matrix& x) {
  return ((x.rowwise() - m.center.transpose()).array().rowwise() / m.scale.transpose().array()).matrix();
}

// Upper bound on the curvature of the mean logistic loss: 0.25 * largest
// eigenvalue of [X 1]^T [X 1] / N, plus the ridge term.
double smoothness(const nn::Matrix& xs, double l2) {
  const nn::Index d = xs.cols();
  nn::Matrix a(xs.rows(), d + 1);
  a.leftCols(d) = xs;
  a.col(d).setOnes();
  const nn::Matrix gram = a.transpose() * a / static_cast<double>(xs.rows());
  const double lmax = Eigen::SelfAdjointEigenSolver<nn::Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  return 0.25 * lmax + l2;
}

// Gradient of the mean logistic loss plus ridge, for standardized inputs.
double gradient(const nn::Matrix& xs, std::span<const uint8_t> y, const nn::Vector& w, double b,
                double l2, nn::Vector& gw, double& gb) {
  const nn::Vector z = (xs * w).array() + b;
  nn::Vector r(z.size());
  double loss = 0.0;
  for (nn::Index i = 0; i < z.size(); ++i) {
    r[i] = nn::sigmoid(z[i]) - y[static_cast<size_t>(i)];
    loss += log1p_exp(z[i]) - y[static_cast<size_t>(i)] * z[i];
  }
  const double inv_n = 1.0 / static_cast<double>(xs.rows());
  gw = xs.transpose() * r * inv_n + l2 * w;
  gb = r.sum() * inv_n;
  return loss * inv_n + 0.5 * l2 * w.squaredNorm();
}

void require_two_classes(std::span<const uint8_t> y, const char* what) {
  const auto pos = std::count(y.begin(), y.end(), uint8_t{1});
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) {
    throw DataError(std::string(what) + ": training labels contain a single class");
  }
}

}  // namespace

// ---------------------------------------------------------------- fidelity

nn::Matrix timestep_prevalence(const BinarySequenceTensor& x) {
  if (x.empty()) throw DataError("prevalence: empty tensor");
  nn::Matrix out = nn::Matrix::Zero(static_cast<nn::Index>(x.timesteps()), static_cast<nn::Index>(x.features()));
  for (size_t n = 0; n < x.samples(); ++n) {
    for (size_t t = 0; t < x.timesteps(); ++t) {
      const auto row = x.row(n, t);
      for (size_t d = 0; d < row.size(); ++d) out(static_cast<nn::Index>(t), static_cast<nn::Index>(d)) += row[d];
    }
  }
  return out / static_cast<double>(x.samples());
}

nn::Vector prevalence(const BinarySequenceTensor& x) {
  return timestep_prevalence(x).colwise().mean().transpose();
}

double r2_fidelity(const BinarySequenceTensor& real, const BinarySequenceTensor& syn) {
  require_same_layout(real, syn, "r2_fidelity");
  const nn::Matrix mr = timestep_prevalence(real);
  const nn::Matrix ms = timestep_prevalence(syn);
  // Grand mean from the integer event count, so it is exact whenever the
  // cell means are.
  const auto events = static_cast<size_t>(std::count(real.bits().begin(), real.bits().end(), uint8_t{1}));
  const double grand = static_cast<double>(events) /
                       static_cast<double>(real.samples() * real.timesteps() * real.features());
  const double total = (mr.array() - grand).square().sum();
  if (!(total > 0.0)) {
    throw DataError("r2_fidelity: real per-(t, d) means have zero variance (degenerate input)");
  }
  return 1.0 - (mr - ms).squaredNorm() / total;
}

PackedSamples::PackedSamples(const BinarySequenceTensor& x) {
  std::vector<size_t> all(x.samples());
  std::iota(all.begin(), all.end(), size_t{0});
  *this = PackedSamples(x, all);
}

PackedSamples::PackedSamples(const BinarySequenceTensor& x, std::span<const size_t> indices) {
  count_ = indices.size();
  bits_ = x.timesteps() * x.features();
  stride_ = (bits_ + 63) / 64;
  words_.assign(count_ * stride_, 0);
  for (size_t i = 0; i < count_; ++i) {
    if (indices[i] >= x.samples()) throw InvalidArgument("PackedSamples: index out of range");
    const auto s = x.sample(indices[i]);
    uint64_t* dst = words_.data() + i * stride_;
    for (size_t b = 0; b < s.size(); ++b) {
      if (s[b]) dst[b / 64] |= uint64_t{1} << (b % 64);
    }
  }
}

uint32_t hamming(std::span<const uint64_t> a, std::span<const uint64_t> b) {
  uint32_t d = 0;
  for (size_t i = 0; i < a.size(); ++i) d += static_cast<uint32_t>(std::popcount(a[i] ^ b[i]));
  return d;
}

double mmd_packed(const PackedSamples& a, const PackedSamples& b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("mmd: need at least 2 samples per side");
  if (a.bits_per_sample() != b.bits_per_sample()) throw DimensionError("mmd: sample widths differ");
  const size_t na = a.size(), nb = b.size(), n = na + nb;
  auto pooled = [&](size_t i) { return i < na ? a.sample(i) : b.sample(i - na); };
  // Pairwise squared distances over the pooled sample, upper triangle.
  std::vector<uint32_t> dist(n * n, 0);
  std::vector<uint32_t> upper;
  upper.reserve(n * (n - 1) / 2);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const uint32_t d = hamming(pooled(i), pooled(j));
      dist[i * n + j] = dist[j * n + i] = d;
      upper.push_back(d);
    }
  }
  // Lower median of the distinct-pair distances.
  const size_t mid = (upper.size() - 1) / 2;
  std::nth_element(upper.begin(), upper.begin() + static_cast<std::ptrdiff_t>(mid), upper.end());
  double h = static_cast<double>(upper[mid]);
  if (h <= 0.0) h = 1.0;

  std::vector<double> kernel(a.bits_per_sample() + 1);
  for (size_t d = 0; d < kernel.size(); ++d) kernel[d] = std::exp(-static_cast<double>(d) / h);
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      const double k = kernel[dist[i * n + j]];
      if (i < na && j < na) kaa += k;
      else if (i >= na && j >= na) kbb += k;
      else if (i < na) kab += k;
    }
  }
  const double fa = static_cast<double>(na), fb = static_cast<double>(nb);
  return kaa / (fa * fa) + kbb / (fb * fb) - 2.0 * kab / (fa * fb);
}

double mmd(const BinarySequenceTensor& real, const BinarySequenceTensor& syn, uint64_t seed, size_t cap) {
  require_same_layout(real, syn, "mmd");
  const auto ir = subsample(real.samples(), cap, derive_seed(seed, {1}));
  const auto is = subsample(syn.samples(), cap, derive_seed(seed, {2}));
  return mmd_packed(PackedSamples(real, ir), PackedSamples(syn, is));
}

FidelityReport fidelity(const BinarySequenceTensor& real, const BinarySequenceTensor& syn,
                        uint64_t seed, size_t mmd_cap) {
  FidelityReport r;
  r.r2 = r2_fidelity(real, syn);
  r.mmd = mmd(real, syn, seed, mmd_cap);
  r.timestep_prevalence_real = timestep_prevalence(real);
  r.timestep_prevalence_syn = timestep_prevalence(syn);
  r.prevalence_real = r.timestep_prevalence_real.colwise().mean().transpose();
  r.prevalence_syn = r.timestep_prevalence_syn.colwise().mean().transpose();
  return r;
}

// ----------------------------------------------------------------- utility

nn::Matrix pooled_features(const BinarySequenceTensor& x) {
  nn::Matrix out = nn::Matrix::Zero(static_cast<nn::Index>(x.samples()), static_cast<nn::Index>(x.features()));
  if (x.timesteps() == 0) return out;
  for (size_t n = 0; n < x.samples(); ++n) {
    for (size_t t = 0; t < x.timesteps(); ++t) {
      const auto row = x.row(n, t);
      for (size_t d = 0; d < row.size(); ++d) out(static_cast<nn::Index>(n), static_cast<nn::Index>(d)) += row[d];
    }
  }
  return out / static_cast<double>(x.timesteps());
}

LabeledFeatures labeled_features(const BinarySequenceTensor& x) {
  return {pooled_features(x), x.labels()};
}

std::vector<double> LogisticModel::predict(const nn::Matrix& x) const {
  nn::require_length(x.cols(), weights.size(), "logistic predict");
  const nn::Vector z = (standardize(*this, x) * weights).array() + bias;
  std::vector<double> out(static_cast<size_t>(z.size()));
  for (nn::Index i = 0; i < z.size(); ++i) out[static_cast<size_t>(i)] = nn::sigmoid(z[i]);
  return out;
}

LogisticModel train_logistic(const LabeledFeatures& train, const LogisticOptions& options) {
  if (train.x.rows() == 0) throw DataError("train_logistic: empty training set");
  nn::require_length(static_cast<nn::Index>(train.y.size()), train.x.rows(), "train_logistic labels");
  require_two_classes(train.y, "train_logistic");
  LogisticModel m;
  set_standardization(m, feature_moments(train.x));
  const nn::Matrix xs = standardize(m, train.x);
  m.weights = nn::Vector::Zero(xs.cols());
  const double step = 1.0 / smoothness(xs, options.l2);
  nn::Vector gw;
  double gb = 0.0;
  for (size_t it = 0; it < options.max_iterations; ++it) {
    gradient(xs, train.y, m.weights, m.bias, options.l2, gw, gb);
    if (std::sqrt(gw.squaredNorm() + gb * gb) < options.gradient_tolerance) break;
    m.weights -= step * gw;
    m.bias -= step * gb;
  }
  return m;
}

LogisticModel train_logistic_federated(std::span<const LabeledFeatures> hospitals,
                                       const LogisticOptions& options) {
  if (hospitals.empty()) throw DataError("train_logistic_federated: no hospitals");
  Moments pooled;
  std::vector<uint8_t> all_labels;
  for (const auto& h : hospitals) {
    if (h.x.rows() == 0) throw DataError("train_logistic_federated: a hospital has no samples");
    nn::require_length(static_cast<nn::Index>(h.y.size()), h.x.rows(), "train_logistic_federated labels");
    Moments m = feature_moments(h.x);
    if (pooled.n == 0.0) {
      pooled = m;
    } else {
      pooled.n += m.n;
      pooled.sum += m.sum;
      pooled.sumsq += m.sumsq;
    }
    all_labels.insert(all_labels.end(), h.y.begin(), h.y.end());
  }
  require_two_classes(all_labels, "train_logistic_federated");

  LogisticModel global;
  set_standardization(global, pooled);
  std::vector<nn::Matrix> xs;
  std::vector<double> steps;
  for (const auto& h : hospitals) {
    xs.push_back(standardize(global, h.x));
    steps.push_back(1.0 / smoothness(xs.back(), options.l2));
  }
  global.weights = nn::Vector::Zero(hospitals.front().x.cols());
  nn::Vector gw;
  double gb = 0.0;
  for (size_t round = 0; round < options.federated_rounds; ++round) {
    nn::Vector w_sum = nn::Vector::Zero(global.weights.size());
    double b_sum = 0.0;
    for (size_t k = 0; k < hospitals.size(); ++k) {
      nn::Vector w = global.weights;
      double b = global.bias;
      for (size_t s = 0; s < options.local_steps; ++s) {
        gradient(xs[k], hospitals[k].y, w, b, options.l2, gw, gb);
        w -= steps[k] * gw;
        b -= steps[k] * gb;
      }
      const double alpha = static_cast<double>(xs[k].rows()) / pooled.n;
      w_sum += alpha * w;
      b_sum += alpha * b;
    }
    global.weights = std::move(w_sum);
    global.bias = b_sum;
  }
  return global;
}

double auroc(std::span<const double> scores, std::span<const uint8_t> labels) {
  nn::require_length(static_cast<nn::Index>(labels.size()), static_cast<nn::Index>(scores.size()), "auroc");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0, pos = 0.0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) {
        rank_sum += avg_rank;
        pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double neg = static_cast<double>(scores.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw DataError("auroc: both classes must be present");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double auprc(std::span<const double> scores, std::span<const uint8_t> labels) {
  nn::require_length(static_cast<nn::Index>(labels.size()), static_cast<nn::Index>(scores.size()), "auprc");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  const double total_pos = static_cast<double>(std::count(labels.begin(), labels.end(), uint8_t{1}));
  if (total_pos == 0.0) throw DataError("auprc: no positive labels");
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (size_t k = i; k <= j; ++k) (labels[order[k]] ? tp : fp) += 1.0;
    const double recall = tp / total_pos;
    area += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

UtilityScores score_downstream(const LogisticModel& model, const LabeledFeatures& test) {
  const auto scores = model.predict(test.x);
  return {auroc(scores, test.y), auprc(scores, test.y)};
}

// ----------------------------------------------------------------- privacy

double mir(const BinarySequenceTensor& members, const BinarySequenceTensor& holdout,
           const BinarySequenceTensor& syn, uint64_t seed) {
  if (members.samples() < 2 || holdout.samples() < 2 || syn.empty()) {
    throw DataError("mir: need at least 2 members, 2 holdout records and 1 synthetic sample");
  }
  require_same_layout(members, syn, "mir");
  require_same_layout(holdout, syn, "mir");
  const PackedSamples pool(syn);
  const auto dm = nearest_distances(PackedSamples(members), pool);
  const auto dh = nearest_distances(PackedSamples(holdout), pool);

  // Random halves: calibration [0, n/2), evaluation [n/2, n).
  auto halves = [&](size_t n, uint64_t stream) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    Rng rng = make_rng(seed, {stream});
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
  };
  const auto om = halves(dm.size(), 1), oh = halves(dh.size(), 2);
  const size_t cm = om.size() / 2, ch = oh.size() / 2;

  auto rate = [](const std::vector<uint32_t>& d, const std::vector<size_t>& order, size_t lo,
                 size_t hi, int64_t threshold) {
    size_t hits = 0;
    for (size_t i = lo; i < hi; ++i) hits += static_cast<int64_t>(d[order[i]]) <= threshold;
    return static_cast<double>(hits) / static_cast<double>(hi - lo);
  };

  // Candidate thresholds: "never member" plus every calibration distance.
  std::vector<int64_t> candidates{-1};
  for (size_t i = 0; i < cm; ++i) candidates.push_back(dm[om[i]]);
  for (size_t i = 0; i < ch; ++i) candidates.push_back(dh[oh[i]]);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  int64_t best_threshold = -1;
  double best = -2.0;
  for (int64_t th : candidates) {
    const double adv = rate(dm, om, 0, cm, th) - rate(dh, oh, 0, ch, th);
    if (adv > best) {
      best = adv;
      best_threshold = th;
    }
  }
  return rate(dm, om, cm, om.size(), best_threshold) - rate(dh, oh, ch, oh.size(), best_threshold);
}

double nnaa_packed(const PackedSamples& real, const PackedSamples& syn) {
  if (real.size() == 0 || syn.size() == 0) throw DataError("nnaa: empty sample set");
  if (real.bits_per_sample() != syn.bits_per_sample()) throw DimensionError("nnaa: sample widths differ");
  size_t real_nearer = 0;
  for (size_t j = 0; j < syn.size(); ++j) {
    const auto q = syn.sample(j);
    uint32_t to_real = std::numeric_limits<uint32_t>::max();
    for (size_t i = 0; i < real.size() && to_real > 0; ++i) to_real = std::min(to_real, hamming(q, real.sample(i)));
    uint32_t to_syn = std::numeric_limits<uint32_t>::max();
    for (size_t i = 0; i < syn.size() && to_syn > to_real; ++i) {
      if (i != j) to_syn = std::min(to_syn, hamming(q, syn.sample(i)));
    }
    real_nearer += to_real < to_syn;
  }
  return static_cast<double>(real_nearer) / static_cast<double>(syn.size());
}

double nnaa(const BinarySequenceTensor& real, const BinarySequenceTensor& syn, uint64_t seed, size_t cap) {
  require_same_layout(real, syn, "nnaa");
  if (real.empty() || syn.empty()) throw DataError("nnaa: empty sample set");
  const size_t n = std::min({real.samples(), syn.samples(), cap});
  const auto ir = subsample(real.samples(), n, derive_seed(seed, {3}));
  const auto is = subsample(syn.samples(), n, derive_seed(seed, {4}));
  return nnaa_packed(PackedSamples(real, ir), PackedSamples(syn, is));
}

void export_flat_csv(const std::filesystem::path& path, const BinarySequenceTensor& real,
                     const BinarySequenceTensor& syn, size_t cap, uint64_t seed) {
  require_same_layout(real, syn, "export_flat_csv");
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "source,label";
  for (size_t t = 0; t < real.timesteps(); ++t) {
    for (size_t d = 0; d < real.features(); ++d) os << ",t" << t << "_f" << d;
  }
  os << '\n';
  auto emit = [&](const BinarySequenceTensor& x, const char* source, uint64_t stream) {
    for (size_t n : subsample(x.samples(), cap, derive_seed(seed, {stream}))) {
      os << source << ',' << int{x.label(n)};
      for (uint8_t b : x.sample(n)) os << ',' << int{b};
      os << '\n';
    }
  };
  emit(real, "real", 5);
  emit(syn, "synthetic", 6);
  if (!os) throw DataError("failed writing " + path.string());
}

}  // namespace fedgen::eval
