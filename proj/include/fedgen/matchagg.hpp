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

// Server-side matching aggregation of encoders: neuron matching by linear
// assignment, permutation propagation through the layer stack, and
// permutation-aware weighted averaging. Plain FedAvg lives here as well.

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fedgen/bae.hpp"
#include "fedgen/errors.hpp"
#include "fedgen/nn.hpp"
#include "fedgen/permutation.hpp"

namespace fedgen::matchagg {

enum class CostKind { kSquaredEuclidean, kCosine };

CostKind cost_kind_from_string(const std::string& s);
std::string to_string(CostKind kind);

// Squared Euclidean distance, or 1 - cosine similarity for kCosine (a zero
// vector has similarity 0 to everything but itself).
double neuron_cost(const nn::Vector& a, const nn::Vector& b,
                   CostKind kind = CostKind::kSquaredEuclidean);

// Row i is neuron i of `layer`: its incoming weights followed by its bias.
nn::Matrix neuron_vectors(const nn::DenseLayer& layer);

// Entry (i, j) = cost(local neuron i, reference neuron j).
nn::Matrix cost_matrix(const nn::Matrix& local, const nn::Matrix& reference, CostKind kind);

// Minimum-cost perfect assignment of rows to columns (O(m^3) shortest
// augmenting paths with potentials). Result[i] is the column of row i.
// Ties resolve toward the lowest column index.
Permutation hungarian_solve(const nn::Matrix& cost);

double assignment_cost(const nn::Matrix& cost, const Permutation& perm);

// Applies per-layer permutations: columns of layer l move by perm[l] and
// the input rows of layer l + 1 follow. The function computed by the
// encoder is unchanged up to a reordering of the latent coordinates by the
// last permutation.
bae::Encoder permute_encoder(const bae::Encoder& encoder, std::span<const Permutation> perms);

// Sequential layer-wise matching of `local` against `reference`, one
// permutation per layer including the latent layer.
std::vector<Permutation> match_encoder(const bae::Encoder& local, const bae::Encoder& reference,
                                       CostKind kind = CostKind::kSquaredEuclidean);

// Normalized per-hospital sample weights alpha_k = N_k / sum N.
struct AggregationWeights {
  nn::Vector alpha;

  static AggregationWeights from_counts(std::span<const size_t> counts);
  static AggregationWeights uniform(size_t k);
  size_t size() const { return static_cast<size_t>(alpha.size()); }
};

// Throws InvalidArgument unless `w` is a probability vector of length k.
void check_weights(const nn::Vector& w, size_t k);

// Elementwise sum_k w_k * params_k, accumulated in hospital order.
template <nn::Parametric P>
P fedavg_aggregate(std::span<const P> param_sets, const nn::Vector& weights) {
  if (param_sets.empty()) throw InvalidArgument("fedavg_aggregate: no parameter sets");
  check_weights(weights, param_sets.size());
  P out = nn::zeros_like(param_sets.front());
  auto dst = out.tensors();
  for (size_t k = 0; k < param_sets.size(); ++k) {
    auto src = param_sets[k].tensors();
    if (src.size() != dst.size()) {
      throw DimensionError("fedavg_aggregate: parameter set " + std::to_string(k) +
                           " has a different tensor count");
    }
    for (size_t i = 0; i < dst.size(); ++i) {
      if (src[i].size() != dst[i].size()) {
        throw DimensionError("fedavg_aggregate: parameter set " + std::to_string(k) + " tensor " +
                             std::to_string(i) + " has " + std::to_string(src[i].size()) +
                             " entries, expected " + std::to_string(dst[i].size()));
      }
      const double w = weights[static_cast<nn::Index>(k)];
      for (size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += w * src[i][j];
    }
  }
  return out;
}

// Permutes every encoder by its matched permutations, then averages.
bae::Encoder matched_average(std::span<const bae::Encoder> encoders,
                             std::span<const std::vector<Permutation>> permutations,
                             const nn::Vector& weights);

enum class ReferenceMode { kFedavgInit, kMajorityAnchor };

ReferenceMode reference_mode_from_string(const std::string& s);
std::string to_string(ReferenceMode mode);

// Round 0: the weighted average of the local encoders (kFedavgInit) or the
// encoder of the hospital with the largest weight (kMajorityAnchor, lowest
// index on ties). Later rounds: the previous global encoder.
bae::Encoder select_reference(int round, const bae::Encoder* previous_global,
                              std::span<const bae::Encoder> round0_locals,
                              const AggregationWeights& weights, ReferenceMode mode);

}  // namespace fedgen::matchagg
