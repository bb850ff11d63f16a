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

// Distribution-aware aggregation: each hospital summarizes its posterior
// mixture per timestep by a moment-matched diagonal Gaussian; the server
// turns pairwise temporal KL divergences into softmax-style weights.

#pragma once

#include <span>
#include <vector>

#include "fedgen/matchagg.hpp"
#include "fedgen/nn.hpp"
#include "fedgen/tcvae.hpp"

namespace fedgen::distagg {

inline constexpr double kVarianceFloor = 1e-6;

// Per-timestep mean and variance of a hospital's latent mixture.
struct LatentDistributionSummary {
  std::vector<nn::Vector> mean;
  std::vector<nn::Vector> var;

  size_t timesteps() const { return mean.size(); }
  nn::Index width() const { return mean.empty() ? 0 : mean.front().size(); }
};

// Law of total variance per step: mean of the per-sample means, and mean
// of the per-sample variances plus the variance of the means, floored.
LatentDistributionSummary summarize_latent_distribution(const tcvae::PosteriorMoments& moments);

// (1/T) sum_t KL(a_t || b_t).
double temporal_divergence(const LatentDistributionSummary& a, const LatentDistributionSummary& b);

// K x K matrix d(k, j) = temporal_divergence(summary_k, summary_j).
nn::Matrix divergence_matrix(std::span<const LatentDistributionSummary> summaries);

// dbar_k = mean over j != k of d(k, j); zeros for K = 1.
nn::Vector mean_divergence(const nn::Matrix& divergences);

// alpha_k exp(-tau dbar_k), normalized. tau = 0 returns alpha unchanged and
// K = 1 returns (1).
nn::Vector distribution_weights(const nn::Matrix& divergences, const nn::Vector& alpha, double tau);

// Every group (backbone, posterior, prior, likelihood) averaged with `weights`.
tcvae::TcvaeParams distribution_aware_aggregate(std::span<const tcvae::TcvaeParams> param_sets,
                                                const nn::Vector& weights);

}  // namespace fedgen::distagg
