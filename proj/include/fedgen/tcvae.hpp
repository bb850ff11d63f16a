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

// Temporal conditional VAE over latent trajectories h_{1:T}. A two-cell
// LSTM reads [h_{t-1}; c] and produces s_t; three heads map
//   posterior  [h_t; s_t; c] -> (mu_q, logvar_q)   over z_t
//   prior      [s_t; c]      -> (mu_p, logvar_p)   over z_t
//   likelihood [z_t; s_t; c] -> (mu_x, logvar_x)   over h_t
// Training teacher-forces the recurrence with the observed h; generation
// rolls out with the prior and feeds back the emitted h.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedgen/bae.hpp"
#include "fedgen/nn.hpp"

namespace fedgen::tcvae {

// Log-variance outputs are clamped to this range (zero gradient outside).
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

// Tanh hidden layers followed by a linear layer emitting [mu; logvar].
struct Head {
  std::vector<nn::DenseLayer> layers;

  nn::Index input_width() const { return layers.front().in_width(); }
  nn::Index output_width() const { return layers.back().out_width() / 2; }

  nn::TensorList tensors();
  nn::ConstTensorList tensors() const;
};

struct TcvaeShape {
  size_t observation_width = 32;  // d, width of h_t
  size_t z_width = 16;
  size_t condition_width = 2;
  size_t rnn_hidden = 32;
  size_t head_hidden = 64;
};

struct TcvaeParams {
  nn::LstmBackbone backbone;
  Head posterior;
  Head prior;
  Head likelihood;

  nn::Index observation_width() const { return likelihood.output_width(); }
  nn::Index z_width() const { return prior.output_width(); }
  nn::Index condition_width() const { return backbone.input_width() - observation_width(); }
  nn::Index state_width() const { return backbone.hidden_width(); }

  nn::TensorList tensors();
  nn::ConstTensorList tensors() const;
};

TcvaeParams init_tcvae(const TcvaeShape& shape, uint64_t seed);
// Throws DimensionError when the heads and backbone disagree.
void validate(const TcvaeParams& params);

// One-hot label rows, width 2.
nn::Matrix one_hot_conditions(std::span<const uint8_t> labels);

// Teacher-forced batch: h[t] is B x d for t = 0..T-1, condition is B x |c|.
struct SequenceBatch {
  std::vector<nn::Matrix> h;
  nn::Matrix condition;

  nn::Index batch() const { return condition.rows(); }
  size_t timesteps() const { return h.size(); }
};

SequenceBatch make_batch(const bae::LatentSequenceTensor& latents, std::span<const uint8_t> labels,
                         std::span<const size_t> samples);

// Standard-normal noise for the posterior sample, one B x d_z matrix per step.
std::vector<nn::Matrix> draw_noise(size_t timesteps, nn::Index batch, nn::Index z_width, Rng& rng);

// Everything one step produces for a batch.
struct StepResult {
  nn::Matrix mu_q, var_q, mu_p, var_p, z, mu_x, var_x;
};

// Advances `state` with input [h_prev; c] and evaluates the three heads,
// sampling z_t = mu_q + sigma_q * noise.
StepResult tcvae_forward_step(const TcvaeParams& params, nn::LstmState& state,
                              const nn::Matrix& h_prev, const nn::Matrix& h_t,
                              const nn::Matrix& condition, const nn::Matrix& noise);

// Per-sample posterior moments, one N x d_z matrix per step.
struct PosteriorMoments {
  std::vector<nn::Matrix> mean;
  std::vector<nn::Matrix> var;
};

struct ElboTerms {
  double nll = 0.0;  // mean over batch of summed Gaussian NLL
  double kl = 0.0;   // mean over batch of summed KL
  double loss = 0.0; // nll + lambda * kl
};

// Mean over the batch of sum_t [ -log N(h_t; mu_x, var_x) + lambda KL(q_t || p_t) ].
// Accumulates d(loss)/d(params) into `grads` and writes posterior moments
// when the pointers are non-null.
ElboTerms sequence_elbo(const TcvaeParams& params, const SequenceBatch& batch, double lambda,
                        std::span<const nn::Matrix> noise, TcvaeParams* grads = nullptr,
                        PosteriorMoments* moments = nullptr);

// sequence_elbo over every sample with noise drawn from `seed`.
ElboTerms tcvae_elbo(const TcvaeParams& params, const bae::LatentSequenceTensor& latents,
                     std::span<const uint8_t> labels, double lambda, uint64_t seed);

struct TrainOptions {
  size_t epochs = 1;
  size_t batch_size = 128;
  double lambda = 0.1;
  nn::AdamConfig adam{};
};

struct TrainReport {
  double mean_loss = 0.0;  // mean batch loss over the pass
  size_t steps = 0;
};

// Mini-batch Adam on the ELBO. `optimizer` carries moment estimates across
// calls; pass nullptr for a fresh optimizer. Throws DataError for empty data.
TrainReport train_local_tcvae(TcvaeParams& params, const bae::LatentSequenceTensor& latents,
                              std::span<const uint8_t> labels, const TrainOptions& options,
                              nn::Adam* optimizer, Rng& rng);

// Posterior means and variances of every sample under `params` (no
// sampling needed: q does not depend on z).
PosteriorMoments posterior_moments(const TcvaeParams& params,
                                   const bae::LatentSequenceTensor& latents,
                                   std::span<const uint8_t> labels);

// Autoregressive rollout from the prior for each label. Emits the
// likelihood mean, or a sample from the likelihood clamped to [-1, 1] when
// `sample_emission`.
bae::LatentSequenceTensor generate_latents(const TcvaeParams& params,
                                           std::span<const uint8_t> labels, size_t timesteps,
                                           uint64_t seed, bool sample_emission = false);

// Single-sequence convenience form; returns T x d.
nn::Matrix generate_latent_sequence(const TcvaeParams& params, uint8_t label, size_t timesteps,
                                    uint64_t seed, bool sample_emission = false);

}  // namespace fedgen::tcvae
