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

#include "fedgen/matchagg.hpp"

#include <algorithm>
#include <limits>

namespace fedgen::matchagg {

CostKind cost_kind_from_string(const std::string& s) {
  if (s == "sqeuclidean") return CostKind::kSquaredEuclidean;
  if (s == "cosine") return CostKind::kCosine;
  throw InvalidArgument("unknown neuron cost '" + s + "' (expected sqeuclidean or cosine)");
}

std::string to_string(CostKind kind) {
  return kind == CostKind::kCosine ? "cosine" : "sqeuclidean";
}

double neuron_cost(const nn::Vector& a, const nn::Vector& b, CostKind kind) {
  nn::require_length(b.size(), a.size(), "neuron_cost");
  if (kind == CostKind::kSquaredEuclidean) return (a - b).squaredNorm();
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return na == nb ? 0.0 : 1.0;
  return 1.0 - a.dot(b) / (na * nb);
}

nn::Matrix neuron_vectors(const nn::DenseLayer& layer) {
  nn::Matrix out(layer.out_width(), layer.in_width() + 1);
  out.leftCols(layer.in_width()) = layer.weights.transpose();
  out.col(layer.in_width()) = layer.bias;
  return out;
}

nn::Matrix cost_matrix(const nn::Matrix& local, const nn::Matrix& reference, CostKind kind) {
  if (local.rows() != reference.rows() || local.cols() != reference.cols()) {
    throw DimensionError("cost_matrix: local neurons " + shape_string(local.rows(), local.cols()) +
                         " vs reference " + shape_string(reference.rows(), reference.cols()));
  }
  const nn::Index m = local.rows();
  nn::Matrix cost(m, m);
  if (kind == CostKind::kSquaredEuclidean) {
    for (nn::Index i = 0; i < m; ++i) {
      for (nn::Index j = 0; j < m; ++j) cost(i, j) = (local.row(i) - reference.row(j)).squaredNorm();
    }
    return cost;
  }
  for (nn::Index i = 0; i < m; ++i) {
    for (nn::Index j = 0; j < m; ++j) {
      cost(i, j) = neuron_cost(local.row(i).transpose(), reference.row(j).transpose(), kind);
    }
  }
  return cost;
}

Permutation hungarian_solve(const nn::Matrix& cost) {
  if (cost.rows() != cost.cols()) {
    throw DimensionError("hungarian_solve: cost matrix " + shape_string(cost.rows(), cost.cols()) +
                         " is not square");
  }
  if (!cost.allFinite()) throw InvalidArgument("hungarian_solve: cost matrix has non-finite entries");
  const size_t n = static_cast<size_t>(cost.rows());
  if (n == 0) return Permutation{};

  // 1-based shortest augmenting path formulation; column 0 is a sentinel.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<size_t> match(n + 1, 0), way(n + 1, 0);
  for (size_t row = 1; row <= n; ++row) {
    match[0] = row;
    size_t col0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[col0] = 1;
      const size_t i0 = match[col0];
      double delta = kInf;
      size_t col1 = 0;
      for (size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<nn::Index>(i0 - 1), static_cast<nn::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = col0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          col1 = j;
        }
      }
      for (size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<int> mapping(n);
  for (size_t j = 1; j <= n; ++j) mapping[match[j] - 1] = static_cast<int>(j - 1);
  return Permutation(std::move(mapping));
}

double assignment_cost(const nn::Matrix& cost, const Permutation& perm) {
  nn::require_length(cost.rows(), static_cast<nn::Index>(perm.size()), "assignment_cost");
  double total = 0.0;
  for (size_t i = 0; i < perm.size(); ++i) total += cost(static_cast<nn::Index>(i), perm[i]);
  return total;
}

namespace {

void check_perms(const bae::Encoder& encoder, std::span<const Permutation> perms) {
  if (perms.size() != encoder.layers.size()) {
    throw DimensionError("permute_encoder: " + std::to_string(perms.size()) +
                         " permutations for " + std::to_string(encoder.layers.size()) + " layers");
  }
  for (size_t l = 0; l < perms.size(); ++l) {
    if (static_cast<nn::Index>(perms[l].size()) != encoder.layers[l].out_width()) {
      throw DimensionError("permute_encoder: layer " + std::to_string(l) + " has width " +
                           std::to_string(encoder.layers[l].out_width()) +
                           " but its permutation has size " + std::to_string(perms[l].size()));
    }
  }
}

}  // namespace

bae::Encoder permute_encoder(const bae::Encoder& encoder, std::span<const Permutation> perms) {
  check_perms(encoder, perms);
  bae::Encoder out = encoder;
  for (size_t l = 0; l < out.layers.size(); ++l) {
    auto& layer = out.layers[l];
    if (l > 0) layer.weights = perms[l - 1].permute_rows(layer.weights);
    layer.weights = perms[l].permute_columns(layer.weights);
    layer.bias = perms[l].permute(layer.bias);
  }
  return out;
}

std::vector<Permutation> match_encoder(const bae::Encoder& local, const bae::Encoder& reference,
                                       CostKind kind) {
  if (!bae::same_shape(local, reference)) {
    throw DimensionError("match_encoder: local and reference encoders differ in shape");
  }
  std::vector<Permutation> perms;
  perms.reserve(local.layers.size());
  for (size_t l = 0; l < local.layers.size(); ++l) {
    nn::DenseLayer layer = local.layers[l];
    if (l > 0) layer.weights = perms.back().permute_rows(layer.weights);
    const nn::Matrix cost =
        cost_matrix(neuron_vectors(layer), neuron_vectors(reference.layers[l]), kind);
    perms.push_back(hungarian_solve(cost));
  }
  return perms;
}

AggregationWeights AggregationWeights::from_counts(std::span<const size_t> counts) {
  if (counts.empty()) throw InvalidArgument("aggregation weights: no hospitals");
  double total = 0.0;
  for (size_t c : counts) total += static_cast<double>(c);
  if (total <= 0.0) throw InvalidArgument("aggregation weights: all sample counts are zero");
  AggregationWeights w;
  w.alpha.resize(static_cast<nn::Index>(counts.size()));
  for (size_t k = 0; k < counts.size(); ++k) {
    w.alpha[static_cast<nn::Index>(k)] = static_cast<double>(counts[k]) / total;
  }
  return w;
}

AggregationWeights AggregationWeights::uniform(size_t k) {
  if (k == 0) throw InvalidArgument("aggregation weights: no hospitals");
  return AggregationWeights{nn::Vector::Constant(static_cast<nn::Index>(k), 1.0 / static_cast<double>(k))};
}

void check_weights(const nn::Vector& w, size_t k) {
  if (static_cast<size_t>(w.size()) != k) {
    throw InvalidArgument("aggregation: " + std::to_string(w.size()) + " weights for " +
                          std::to_string(k) + " parameter sets");
  }
  if (!w.allFinite() || (w.array() < 0.0).any() || std::abs(w.sum() - 1.0) > 1e-9) {
    throw InvalidArgument("aggregation: weights must be non-negative and sum to 1");
  }
}

bae::Encoder matched_average(std::span<const bae::Encoder> encoders,
                             std::span<const std::vector<Permutation>> permutations,
                             const nn::Vector& weights) {
  if (encoders.size() != permutations.size()) {
    throw InvalidArgument("matched_average: " + std::to_string(permutations.size()) +
                          " permutation lists for " + std::to_string(encoders.size()) + " encoders");
  }
  std::vector<bae::Encoder> aligned;
  aligned.reserve(encoders.size());
  for (size_t k = 0; k < encoders.size(); ++k) {
    if (k > 0 && !bae::same_shape(encoders[k], encoders[0])) {
      throw DimensionError("matched_average: encoder " + std::to_string(k) + " differs in shape");
    }
    aligned.push_back(permute_encoder(encoders[k], permutations[k]));
  }
  return fedavg_aggregate<bae::Encoder>(aligned, weights);
}

ReferenceMode reference_mode_from_string(const std::string& s) {
  if (s == "fedavg_init") return ReferenceMode::kFedavgInit;
  if (s == "majority_anchor") return ReferenceMode::kMajorityAnchor;
  throw InvalidArgument("unknown reference mode '" + s + "' (expected fedavg_init or majority_anchor)");
}

std::string to_string(ReferenceMode mode) {
  return mode == ReferenceMode::kMajorityAnchor ? "majority_anchor" : "fedavg_init";
}

bae::Encoder select_reference(int round, const bae::Encoder* previous_global,
                              std::span<const bae::Encoder> round0_locals,
                              const AggregationWeights& weights, ReferenceMode mode) {
  if (round < 0) throw InvalidArgument("select_reference: negative round");
  if (round >= 1) {
    if (previous_global == nullptr) {
      throw InvalidArgument("select_reference: round " + std::to_string(round) +
                            " needs the previous global encoder");
    }
    return *previous_global;
  }
  if (round0_locals.empty()) throw InvalidArgument("select_reference: no local encoders at round 0");
  if (mode == ReferenceMode::kFedavgInit) return fedavg_aggregate(round0_locals, weights.alpha);
  check_weights(weights.alpha, round0_locals.size());
  nn::Index best = 0;
  for (nn::Index k = 1; k < weights.alpha.size(); ++k) {
    if (weights.alpha[k] > weights.alpha[best]) best = k;
  }
  return round0_locals[static_cast<size_t>(best)];
}

}  // namespace fedgen::matchagg
