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

#include "fedgen/distagg.hpp"

#include <cmath>

#include "fedgen/errors.hpp"

namespace fedgen::distagg {

LatentDistributionSummary summarize_latent_distribution(const tcvae::PosteriorMoments& moments) {
  if (moments.mean.empty() || moments.mean.size() != moments.var.size()) {
    throw DimensionError("summarize_latent_distribution: mismatched or empty moment lists");
  }
  LatentDistributionSummary s;
  for (size_t t = 0; t < moments.mean.size(); ++t) {
    const nn::Matrix& mu = moments.mean[t];
    const nn::Matrix& var = moments.var[t];
    nn::require_same_shape(var, mu, "summarize_latent_distribution");
    if (mu.rows() == 0) throw DataError("summarize_latent_distribution: no samples");
    const double inv_n = 1.0 / static_cast<double>(mu.rows());
    nn::Vector m = mu.colwise().sum().transpose() * inv_n;
    nn::Vector between = (mu.rowwise() - m.transpose()).array().square().colwise().sum().transpose() * inv_n;
    nn::Vector within = var.colwise().sum().transpose() * inv_n;
    s.mean.push_back(std::move(m));
    s.var.push_back((within + between).cwiseMax(kVarianceFloor));
  }
  return s;
}

double temporal_divergence(const LatentDistributionSummary& a, const LatentDistributionSummary& b) {
  if (a.timesteps() != b.timesteps() || a.width() != b.width() || a.timesteps() == 0) {
    throw DimensionError("temporal_divergence: summaries have shapes (" +
                         std::to_string(a.timesteps()) + ", " + std::to_string(a.width()) +
                         ") and (" + std::to_string(b.timesteps()) + ", " +
                         std::to_string(b.width()) + ")");
  }
  double sum = 0.0;
  for (size_t t = 0; t < a.timesteps(); ++t) sum += nn::gaussian_kl(a.mean[t], a.var[t], b.mean[t], b.var[t]);
  return sum / static_cast<double>(a.timesteps());
}

nn::Matrix divergence_matrix(std::span<const LatentDistributionSummary> summaries) {
  const auto k = static_cast<nn::Index>(summaries.size());
  nn::Matrix d = nn::Matrix::Zero(k, k);
  for (nn::Index i = 0; i < k; ++i) {
    for (nn::Index j = 0; j < k; ++j) {
      if (i != j) d(i, j) = temporal_divergence(summaries[i], summaries[j]);
    }
  }
  return d;
}

nn::Vector mean_divergence(const nn::Matrix& divergences) {
  if (divergences.rows() != divergences.cols()) {
    throw DimensionError("mean_divergence: divergence matrix " +
                         shape_string(divergences.rows(), divergences.cols()) + " is not square");
  }
  const nn::Index k = divergences.rows();
  nn::Vector out = nn::Vector::Zero(k);
  if (k < 2) return out;
  for (nn::Index i = 0; i < k; ++i) {
    double s = 0.0;
    for (nn::Index j = 0; j < k; ++j) {
      if (j != i) s += divergences(i, j);
    }
    out[i] = s / static_cast<double>(k - 1);
  }
  return out;
}

nn::Vector distribution_weights(const nn::Matrix& divergences, const nn::Vector& alpha, double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw InvalidArgument("distribution_weights: tau must be finite and >= 0");
  matchagg::check_weights(alpha, static_cast<size_t>(divergences.rows()));
  if (!divergences.allFinite() || (divergences.array() < 0.0).any()) {
    throw InvalidArgument("distribution_weights: divergences must be finite and non-negative");
  }
  const nn::Index k = alpha.size();
  if (k == 1) return nn::Vector::Ones(1);
  if (tau == 0.0) return alpha;
  const nn::Vector dbar = mean_divergence(divergences);
  // Shift by the smallest divergence so the largest exponent is 0.
  const double shift = dbar.minCoeff();
  nn::Vector w(k);
  for (nn::Index i = 0; i < k; ++i) w[i] = alpha[i] * std::exp(-tau * (dbar[i] - shift));
  const double total = w.sum();
  if (!(total > 0.0)) throw InvalidArgument("distribution_weights: all weights vanished");
  return w / total;
}

tcvae::TcvaeParams distribution_aware_aggregate(std::span<const tcvae::TcvaeParams> param_sets,
                                                const nn::Vector& weights) {
  if (param_sets.empty()) throw InvalidArgument("distribution_aware_aggregate: no parameter sets");
  std::vector<nn::LstmBackbone> backbones;
  std::vector<tcvae::Head> post, prior, lik;
  for (const auto& p : param_sets) {
    tcvae::validate(p);
    backbones.push_back(p.backbone);
    post.push_back(p.posterior);
    prior.push_back(p.prior);
    lik.push_back(p.likelihood);
  }
  tcvae::TcvaeParams out;
  out.backbone = matchagg::fedavg_aggregate<nn::LstmBackbone>(backbones, weights);
  out.posterior = matchagg::fedavg_aggregate<tcvae::Head>(post, weights);
  out.prior = matchagg::fedavg_aggregate<tcvae::Head>(prior, weights);
  out.likelihood = matchagg::fedavg_aggregate<tcvae::Head>(lik, weights);
  return out;
}

}  // namespace fedgen::distagg
