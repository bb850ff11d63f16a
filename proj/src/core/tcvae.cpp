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

#include "fedgen/tcvae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fedgen/errors.hpp"

namespace fedgen::tcvae {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

nn::TensorList head_tensors(std::vector<nn::DenseLayer>& layers) {
  nn::TensorList out;
  for (auto& l : layers) {
    auto t = l.tensors();
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

nn::ConstTensorList head_tensors(const std::vector<nn::DenseLayer>& layers) {
  nn::ConstTensorList out;
  for (const auto& l : layers) {
    auto t = l.tensors();
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

Head make_head(size_t in, size_t hidden, size_t out, Rng& rng) {
  Head h;
  h.layers.emplace_back(static_cast<nn::Index>(in), static_cast<nn::Index>(hidden), nn::Activation::kTanh);
  h.layers.emplace_back(static_cast<nn::Index>(hidden), static_cast<nn::Index>(2 * out),
                        nn::Activation::kIdentity);
  for (auto& l : h.layers) nn::init_uniform(l, rng);
  return h;
}

nn::Matrix hcat(std::initializer_list<const nn::Matrix*> parts) {
  nn::Index cols = 0;
  const nn::Index rows = (*parts.begin())->rows();
  for (const auto* p : parts) cols += p->cols();
  nn::Matrix out(rows, cols);
  nn::Index c = 0;
  for (const auto* p : parts) {
    out.middleCols(c, p->cols()) = *p;
    c += p->cols();
  }
  return out;
}

struct HeadCache {
  std::vector<nn::DenseCache> layers;
  nn::Matrix raw_logvar;  // before clamping
};

// Returns (mu, logvar) with logvar clamped.
std::pair<nn::Matrix, nn::Matrix> head_forward(const Head& head, const nn::Matrix& input,
                                               HeadCache* cache) {
  nn::Matrix a = input;
  if (cache != nullptr) cache->layers.resize(head.layers.size());
  for (size_t l = 0; l < head.layers.size(); ++l) {
    a = nn::dense_forward(head.layers[l], a, cache ? &cache->layers[l] : nullptr);
  }
  const nn::Index w = head.output_width();
  nn::Matrix mu = a.leftCols(w);
  nn::Matrix raw = a.rightCols(w);
  nn::Matrix logvar = raw.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
  if (cache != nullptr) cache->raw_logvar = std::move(raw);
  return {std::move(mu), std::move(logvar)};
}

// Backward through a head given dL/dmu and dL/dlogvar (post-clamp);
// accumulates into `grads` and returns dL/dinput.
nn::Matrix head_backward(const Head& head, const HeadCache& cache, const nn::Matrix& grad_mu,
                         const nn::Matrix& grad_logvar, Head& grads) {
  const nn::Index w = head.output_width();
  nn::Matrix g(grad_mu.rows(), 2 * w);
  g.leftCols(w) = grad_mu;
  g.rightCols(w) = grad_logvar.cwiseProduct(
      ((cache.raw_logvar.array() >= kLogVarMin) && (cache.raw_logvar.array() <= kLogVarMax))
          .cast<double>()
          .matrix());
  for (size_t l = head.layers.size(); l-- > 0;) {
    g = nn::dense_backward(head.layers[l], cache.layers[l], std::move(g), grads.layers[l], true);
  }
  return g;
}

struct StepCache {
  nn::LstmStepCache lstm;
  HeadCache post, prior, lik;
  StepResult r;
  nn::Matrix logvar_q, logvar_p, logvar_x;
};

StepResult forward_step(const TcvaeParams& params, nn::LstmState& state, const nn::Matrix& h_prev,
                        const nn::Matrix& h_t, const nn::Matrix& c, const nn::Matrix& noise,
                        StepCache* cache) {
  const nn::Matrix u = hcat({&h_prev, &c});
  nn::Matrix s;
  state = nn::lstm_step(params.backbone, state, u, s, cache ? &cache->lstm : nullptr);

  StepResult r;
  auto [mu_q, lv_q] = head_forward(params.posterior, hcat({&h_t, &s, &c}), cache ? &cache->post : nullptr);
  auto [mu_p, lv_p] = head_forward(params.prior, hcat({&s, &c}), cache ? &cache->prior : nullptr);
  r.var_q = lv_q.array().exp().matrix();
  r.var_p = lv_p.array().exp().matrix();
  r.z = mu_q + (0.5 * lv_q.array()).exp().matrix().cwiseProduct(noise);
  auto [mu_x, lv_x] = head_forward(params.likelihood, hcat({&r.z, &s, &c}), cache ? &cache->lik : nullptr);
  r.var_x = lv_x.array().exp().matrix();
  r.mu_q = std::move(mu_q);
  r.mu_p = std::move(mu_p);
  r.mu_x = std::move(mu_x);
  if (cache != nullptr) {
    cache->logvar_q = std::move(lv_q);
    cache->logvar_p = std::move(lv_p);
    cache->logvar_x = std::move(lv_x);
  }
  return r;
}

void check_batch(const TcvaeParams& params, const SequenceBatch& batch,
                 std::span<const nn::Matrix> noise) {
  if (batch.batch() == 0 || batch.h.empty()) throw DataError("tcvae: empty batch");
  if (batch.condition.cols() != params.condition_width()) {
    throw DimensionError("tcvae: condition width " + std::to_string(batch.condition.cols()) +
                         " != " + std::to_string(params.condition_width()));
  }
  if (noise.size() != batch.h.size()) {
    throw DimensionError("tcvae: " + std::to_string(noise.size()) + " noise matrices for " +
                         std::to_string(batch.h.size()) + " steps");
  }
  for (size_t t = 0; t < batch.h.size(); ++t) {
    if (batch.h[t].rows() != batch.batch() || batch.h[t].cols() != params.observation_width()) {
      throw DimensionError("tcvae: step " + std::to_string(t) + " observations " +
                           shape_string(batch.h[t].rows(), batch.h[t].cols()) + ", expected " +
                           shape_string(batch.batch(), params.observation_width()));
    }
    if (noise[t].rows() != batch.batch() || noise[t].cols() != params.z_width()) {
      throw DimensionError("tcvae: noise " + shape_string(noise[t].rows(), noise[t].cols()) +
                           ", expected " + shape_string(batch.batch(), params.z_width()));
    }
  }
}

}  // namespace

nn::TensorList Head::tensors() { return head_tensors(layers); }
nn::ConstTensorList Head::tensors() const { return head_tensors(layers); }

nn::TensorList TcvaeParams::tensors() {
  nn::TensorList out = backbone.tensors();
  for (Head* h : {&posterior, &prior, &likelihood}) {
    auto t = h->tensors();
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

nn::ConstTensorList TcvaeParams::tensors() const {
  nn::ConstTensorList out = backbone.tensors();
  for (const Head* h : {&posterior, &prior, &likelihood}) {
    auto t = h->tensors();
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

TcvaeParams init_tcvae(const TcvaeShape& shape, uint64_t seed) {
  if (shape.observation_width == 0 || shape.z_width == 0 || shape.condition_width == 0 ||
      shape.rnn_hidden == 0 || shape.head_hidden == 0) {
    throw InvalidArgument("init_tcvae: widths must be positive");
  }
  Rng rng = make_rng(seed, {0x7c7a});
  const size_t d = shape.observation_width, c = shape.condition_width, h = shape.rnn_hidden;
  TcvaeParams p;
  p.backbone = nn::LstmBackbone(static_cast<nn::Index>(d + c), static_cast<nn::Index>(h));
  nn::init_lstm(p.backbone, rng);
  p.posterior = make_head(d + h + c, shape.head_hidden, shape.z_width, rng);
  p.prior = make_head(h + c, shape.head_hidden, shape.z_width, rng);
  p.likelihood = make_head(shape.z_width + h + c, shape.head_hidden, d, rng);
  return p;
}

void validate(const TcvaeParams& p) {
  for (const Head* h : {&p.posterior, &p.prior, &p.likelihood}) {
    if (h->layers.empty()) throw DimensionError("tcvae: head without layers");
    for (size_t l = 1; l < h->layers.size(); ++l) {
      if (h->layers[l].in_width() != h->layers[l - 1].out_width()) {
        throw DimensionError("tcvae: inconsistent head layer chain");
      }
    }
    if (h->layers.back().out_width() % 2 != 0) throw DimensionError("tcvae: head output is not [mu; logvar]");
  }
  const nn::Index d = p.observation_width(), dz = p.z_width(), hs = p.state_width();
  const nn::Index c = p.condition_width();
  if (c <= 0 || p.posterior.output_width() != dz || p.posterior.input_width() != d + hs + c ||
      p.prior.input_width() != hs + c || p.likelihood.input_width() != dz + hs + c) {
    throw DimensionError("tcvae: head widths inconsistent with backbone (d=" + std::to_string(d) +
                         ", d_z=" + std::to_string(dz) + ", state=" + std::to_string(hs) + ")");
  }
}

nn::Matrix one_hot_conditions(std::span<const uint8_t> labels) {
  nn::Matrix c = nn::Matrix::Zero(static_cast<nn::Index>(labels.size()), 2);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) throw InvalidArgument("one_hot_conditions: label outside {0,1}");
    c(static_cast<nn::Index>(i), labels[i]) = 1.0;
  }
  return c;
}

SequenceBatch make_batch(const bae::LatentSequenceTensor& latents, std::span<const uint8_t> labels,
                         std::span<const size_t> samples) {
  nn::require_length(static_cast<nn::Index>(labels.size()), static_cast<nn::Index>(latents.samples),
                     "tcvae labels");
  SequenceBatch b;
  const auto rows = static_cast<nn::Index>(samples.size());
  b.h.assign(latents.timesteps, nn::Matrix(rows, static_cast<nn::Index>(latents.width)));
  std::vector<uint8_t> picked(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i] >= latents.samples) throw InvalidArgument("make_batch: sample index out of range");
    picked[i] = labels[samples[i]];
    for (size_t t = 0; t < latents.timesteps; ++t) {
      b.h[t].row(static_cast<nn::Index>(i)) = latents.step(samples[i], t);
    }
  }
  b.condition = one_hot_conditions(picked);
  return b;
}

std::vector<nn::Matrix> draw_noise(size_t timesteps, nn::Index batch, nn::Index z_width, Rng& rng) {
  std::normal_distribution<double> g;
  std::vector<nn::Matrix> out(timesteps, nn::Matrix(batch, z_width));
  for (auto& m : out) {
    for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  }
  return out;
}

StepResult tcvae_forward_step(const TcvaeParams& params, nn::LstmState& state,
                              const nn::Matrix& h_prev, const nn::Matrix& h_t,
                              const nn::Matrix& condition, const nn::Matrix& noise) {
  validate(params);
  const nn::Index d = params.observation_width();
  if (h_prev.cols() != d || h_t.cols() != d || h_t.rows() != h_prev.rows() ||
      condition.rows() != h_t.rows() || condition.cols() != params.condition_width() ||
      noise.rows() != h_t.rows() || noise.cols() != params.z_width()) {
    throw DimensionError("tcvae_forward_step: inputs inconsistent with model widths");
  }
  return forward_step(params, state, h_prev, h_t, condition, noise, nullptr);
}

ElboTerms sequence_elbo(const TcvaeParams& params, const SequenceBatch& batch, double lambda,
                        std::span<const nn::Matrix> noise, TcvaeParams* grads,
                        PosteriorMoments* moments) {
  validate(params);
  if (!(lambda >= 0.0)) throw InvalidArgument("tcvae: lambda must be non-negative");
  check_batch(params, batch, noise);
  const nn::Index B = batch.batch();
  const size_t T = batch.timesteps();
  const nn::Index d = params.observation_width();
  const double inv_b = 1.0 / static_cast<double>(B);

  nn::LstmState state = nn::LstmState::zeros(B, params.state_width());
  nn::Matrix h_prev = nn::Matrix::Zero(B, d);
  std::vector<StepCache> caches(grads != nullptr ? T : 0);
  if (moments != nullptr) {
    moments->mean.resize(T);
    moments->var.resize(T);
  }

  ElboTerms terms;
  for (size_t t = 0; t < T; ++t) {
    StepCache local;
    StepCache* cache = grads != nullptr ? &caches[t] : &local;
    const StepResult& r = cache->r = forward_step(params, state, h_prev, batch.h[t],
                                                  batch.condition, noise[t], cache);
    const nn::Matrix diff = batch.h[t] - r.mu_x;
    terms.nll += 0.5 * (kLog2Pi * static_cast<double>(B * d) + cache->logvar_x.sum() +
                        (diff.array().square() / r.var_x.array()).sum());
    const nn::Matrix dmu = r.mu_q - r.mu_p;
    terms.kl += 0.5 * ((cache->logvar_p - cache->logvar_q).array() +
                       (r.var_q.array() + dmu.array().square()) / r.var_p.array() - 1.0)
                          .sum();
    if (moments != nullptr) {
      moments->mean[t] = r.mu_q;
      moments->var[t] = r.var_q;
    }
    h_prev = batch.h[t];
  }
  terms.nll *= inv_b;
  terms.kl *= inv_b;
  terms.loss = terms.nll + lambda * terms.kl;
  if (grads == nullptr) return terms;

  const nn::Index H = params.state_width();
  nn::LstmStateGrad carry = nn::LstmStateGrad::zeros(B, H);
  for (size_t t = T; t-- > 0;) {
    const StepCache& c = caches[t];
    const StepResult& r = c.r;
    const nn::Index dz = params.z_width();

    // Likelihood: d/dmu_x and d/dlogvar_x of the Gaussian NLL.
    const nn::Matrix resid = r.mu_x - batch.h[t];
    nn::Matrix g_mu_x = (resid.array() / r.var_x.array()).matrix() * inv_b;
    nn::Matrix g_lv_x = (0.5 * (1.0 - resid.array().square() / r.var_x.array())).matrix() * inv_b;
    nn::Matrix g_lik_in = head_backward(params.likelihood, c.lik, g_mu_x, g_lv_x, grads->likelihood);
    const nn::Matrix g_z = g_lik_in.leftCols(dz);
    nn::Matrix g_s = g_lik_in.middleCols(dz, H);

    // KL(q || p) scaled by lambda.
    const nn::Matrix dmu = r.mu_q - r.mu_p;
    const double scale = lambda * inv_b;
    nn::Matrix g_mu_q = (dmu.array() / r.var_p.array()).matrix() * scale;
    nn::Matrix g_lv_q = (0.5 * (r.var_q.array() / r.var_p.array() - 1.0)).matrix() * scale;
    nn::Matrix g_mu_p = -g_mu_q;
    nn::Matrix g_lv_p =
        (0.5 * (1.0 - (r.var_q.array() + dmu.array().square()) / r.var_p.array())).matrix() * scale;

    // Reparameterized sample z = mu_q + exp(logvar_q / 2) * eps.
    g_mu_q += g_z;
    g_lv_q += (g_z.array() * noise[t].array() * 0.5 * (0.5 * c.logvar_q.array()).exp()).matrix();

    nn::Matrix g_post_in = head_backward(params.posterior, c.post, g_mu_q, g_lv_q, grads->posterior);
    g_s += g_post_in.middleCols(d, H);
    nn::Matrix g_prior_in = head_backward(params.prior, c.prior, g_mu_p, g_lv_p, grads->prior);
    g_s += g_prior_in.leftCols(H);

    carry = nn::lstm_step_backward(params.backbone, c.lstm, g_s, carry, grads->backbone);
  }
  return terms;
}

ElboTerms tcvae_elbo(const TcvaeParams& params, const bae::LatentSequenceTensor& latents,
                     std::span<const uint8_t> labels, double lambda, uint64_t seed) {
  if (latents.samples == 0) throw DataError("tcvae_elbo: empty latent tensor");
  Rng rng = make_rng(seed, {0xe1b0});
  constexpr size_t kChunk = 512;
  ElboTerms total;
  std::vector<size_t> idx;
  for (size_t start = 0; start < latents.samples; start += kChunk) {
    const size_t stop = std::min(latents.samples, start + kChunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const SequenceBatch b = make_batch(latents, labels, idx);
    const auto noise = draw_noise(b.timesteps(), b.batch(), params.z_width(), rng);
    const ElboTerms part = sequence_elbo(params, b, lambda, noise);
    const double w = static_cast<double>(stop - start) / static_cast<double>(latents.samples);
    total.nll += w * part.nll;
    total.kl += w * part.kl;
  }
  total.loss = total.nll + lambda * total.kl;
  return total;
}

TrainReport train_local_tcvae(TcvaeParams& params, const bae::LatentSequenceTensor& latents,
                              std::span<const uint8_t> labels, const TrainOptions& options,
                              nn::Adam* optimizer, Rng& rng) {
  validate(params);
  if (latents.samples == 0) throw DataError("train_local_tcvae: empty latent tensor");
  if (options.batch_size == 0) throw InvalidArgument("train_local_tcvae: batch size must be positive");
  TrainReport report;
  if (options.epochs == 0) return report;

  nn::Adam local;
  nn::Adam* opt = optimizer != nullptr ? optimizer : &local;
  if (opt->size() != nn::parameter_count(params)) *opt = nn::Adam(options.adam, nn::parameter_count(params));

  std::vector<size_t> order(latents.samples);
  std::iota(order.begin(), order.end(), size_t{0});
  nn::GradientTape<TcvaeParams> tape(params);
  double sum = 0.0;
  for (size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += options.batch_size) {
      const size_t stop = std::min(order.size(), start + options.batch_size);
      const SequenceBatch b =
          make_batch(latents, labels, std::span<const size_t>(order.data() + start, stop - start));
      const auto noise = draw_noise(b.timesteps(), b.batch(), params.z_width(), rng);
      tape.zero();
      sum += sequence_elbo(params, b, options.lambda, noise, &tape.grads()).loss;
      nn::adam_step(*opt, params, tape.grads());
      ++report.steps;
    }
  }
  report.mean_loss = sum / static_cast<double>(report.steps);
  return report;
}

PosteriorMoments posterior_moments(const TcvaeParams& params,
                                   const bae::LatentSequenceTensor& latents,
                                   std::span<const uint8_t> labels) {
  validate(params);
  if (latents.samples == 0) throw DataError("posterior_moments: empty latent tensor");
  const auto n = static_cast<nn::Index>(latents.samples);
  PosteriorMoments out;
  out.mean.assign(latents.timesteps, nn::Matrix(n, params.z_width()));
  out.var.assign(latents.timesteps, nn::Matrix(n, params.z_width()));
  constexpr size_t kChunk = 512;
  std::vector<size_t> idx;
  for (size_t start = 0; start < latents.samples; start += kChunk) {
    const size_t stop = std::min(latents.samples, start + kChunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const SequenceBatch b = make_batch(latents, labels, idx);
    // q(z_t) does not depend on the sample, so zero noise suffices.
    std::vector<nn::Matrix> zero(b.timesteps(), nn::Matrix::Zero(b.batch(), params.z_width()));
    PosteriorMoments part;
    sequence_elbo(params, b, 0.0, zero, nullptr, &part);
    for (size_t t = 0; t < latents.timesteps; ++t) {
      out.mean[t].middleRows(static_cast<nn::Index>(start), b.batch()) = part.mean[t];
      out.var[t].middleRows(static_cast<nn::Index>(start), b.batch()) = part.var[t];
    }
  }
  return out;
}

bae::LatentSequenceTensor generate_latents(const TcvaeParams& params,
                                           std::span<const uint8_t> labels, size_t timesteps,
                                           uint64_t seed, bool sample_emission) {
  validate(params);
  if (timesteps < 1) throw InvalidArgument("generate_latents: T must be at least 1");
  const nn::Index d = params.observation_width();
  bae::LatentSequenceTensor out;
  out.samples = labels.size();
  out.timesteps = timesteps;
  out.width = static_cast<size_t>(d);
  out.values = nn::Matrix(static_cast<nn::Index>(labels.size() * timesteps), d);
  if (labels.empty()) return out;

  const nn::Index B = static_cast<nn::Index>(labels.size());
  const nn::Matrix c = one_hot_conditions(labels);
  Rng rng = make_rng(seed, {0x9e4});
  std::normal_distribution<double> g;
  nn::LstmState state = nn::LstmState::zeros(B, params.state_width());
  nn::Matrix h_prev = nn::Matrix::Zero(B, d);
  for (size_t t = 0; t < timesteps; ++t) {
    nn::Matrix s;
    state = nn::lstm_step(params.backbone, state, hcat({&h_prev, &c}), s);
    auto [mu_p, lv_p] = head_forward(params.prior, hcat({&s, &c}), nullptr);
    nn::Matrix z = mu_p;
    for (nn::Index i = 0; i < z.size(); ++i) z.data()[i] += std::exp(0.5 * lv_p.data()[i]) * g(rng);
    auto [mu_x, lv_x] = head_forward(params.likelihood, hcat({&z, &s, &c}), nullptr);
    if (sample_emission) {
      // Latents live in the tanh range.
      for (nn::Index i = 0; i < mu_x.size(); ++i) {
        mu_x.data()[i] = std::clamp(mu_x.data()[i] + std::exp(0.5 * lv_x.data()[i]) * g(rng), -1.0, 1.0);
      }
    }
    for (nn::Index n = 0; n < B; ++n) {
      out.values.row(n * static_cast<nn::Index>(timesteps) + static_cast<nn::Index>(t)) = mu_x.row(n);
    }
    h_prev = std::move(mu_x);
  }
  return out;
}

nn::Matrix generate_latent_sequence(const TcvaeParams& params, uint8_t label, size_t timesteps,
                                    uint64_t seed, bool sample_emission) {
  const uint8_t labels[1] = {label};
  return generate_latents(params, labels, timesteps, seed, sample_emission).values;
}

}  // namespace fedgen::tcvae
