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

#include "fedgen/bae.hpp"

#include <algorithm>
#include <numeric>

#include "fedgen/errors.hpp"

namespace fedgen::bae {

namespace {

template <class Layers>
nn::TensorList layer_tensors(Layers& layers) {
  nn::TensorList out;
  for (auto& l : layers) {
    auto t = l.tensors();
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

template <class Layers>
nn::ConstTensorList const_layer_tensors(const Layers& layers) {
  nn::ConstTensorList out;
  for (const auto& l : layers) {
    auto t = l.tensors();
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

void check_chain(const std::vector<nn::DenseLayer>& layers, const char* what) {
  if (layers.empty()) throw DimensionError(std::string(what) + ": no layers");
  for (size_t i = 1; i < layers.size(); ++i) {
    if (layers[i].in_width() != layers[i - 1].out_width()) {
      throw DimensionError(std::string(what) + ": layer " + std::to_string(i) + " input width " +
                           std::to_string(layers[i].in_width()) + " != previous output width " +
                           std::to_string(layers[i - 1].out_width()));
    }
  }
}

// Mean BCE over rows of sigmoid(decoder(z)) against `target`; accumulates
// the gradient of that mean into `grads` and writes dL/dz when requested.
double decoder_loss(const Decoder& decoder, const nn::Matrix& z, const nn::Matrix& target,
                    Decoder* grads, nn::Matrix* grad_z) {
  const auto& layers = decoder.layers;
  std::vector<nn::DenseCache> caches(layers.size());
  nn::Matrix a = z;
  for (size_t l = 0; l < layers.size(); ++l) a = nn::dense_forward(layers[l], a, &caches[l]);

  const double inv_b = 1.0 / static_cast<double>(std::max<nn::Index>(1, z.rows()));
  nn::Matrix g;
  const double loss = nn::bce_loss_batch(target, a, grads != nullptr ? &g : nullptr) * inv_b;
  if (grads == nullptr) return loss;

  g *= inv_b;
  for (size_t l = layers.size(); l-- > 0;) {
    const bool want_input = l > 0 || grad_z != nullptr;
    if (l == layers.size() - 1) {
      g = nn::dense_backward_preact(layers[l], caches[l].input, g, grads->layers[l], want_input);
    } else {
      g = nn::dense_backward(layers[l], caches[l], std::move(g), grads->layers[l], want_input);
    }
  }
  if (grad_z != nullptr) *grad_z = std::move(g);
  return loss;
}

}  // namespace

nn::TensorList Encoder::tensors() { return layer_tensors(layers); }
nn::ConstTensorList Encoder::tensors() const { return const_layer_tensors(layers); }
nn::TensorList Decoder::tensors() { return layer_tensors(layers); }
nn::ConstTensorList Decoder::tensors() const { return const_layer_tensors(layers); }

nn::TensorList BaeParams::tensors() {
  auto out = encoder.tensors();
  auto d = decoder.tensors();
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

nn::ConstTensorList BaeParams::tensors() const {
  auto out = encoder.tensors();
  auto d = decoder.tensors();
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

BaeParams init_bae(const BaeShape& shape, uint64_t seed) {
  if (shape.input_width == 0 || shape.latent_width == 0) {
    throw InvalidArgument("init_bae: widths must be positive");
  }
  Rng rng = make_rng(seed, {0xbae});
  std::vector<size_t> widths{shape.input_width};
  widths.insert(widths.end(), shape.hidden_widths.begin(), shape.hidden_widths.end());
  widths.push_back(shape.latent_width);

  BaeParams p;
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool latent = i + 2 == widths.size();
    nn::DenseLayer layer(static_cast<nn::Index>(widths[i]), static_cast<nn::Index>(widths[i + 1]),
                         latent ? nn::Activation::kTanh : nn::Activation::kRelu);
    nn::init_uniform(layer, rng);
    p.encoder.layers.push_back(std::move(layer));
  }
  for (size_t i = widths.size() - 1; i > 0; --i) {
    const bool output = i == 1;
    nn::DenseLayer layer(static_cast<nn::Index>(widths[i]), static_cast<nn::Index>(widths[i - 1]),
                         output ? nn::Activation::kSigmoid : nn::Activation::kRelu);
    nn::init_uniform(layer, rng);
    p.decoder.layers.push_back(std::move(layer));
  }
  return p;
}

void validate(const BaeParams& params) {
  check_chain(params.encoder.layers, "encoder");
  check_chain(params.decoder.layers, "decoder");
  if (params.encoder.latent_width() != params.decoder.latent_width()) {
    throw DimensionError("BAE: encoder latent width " +
                         std::to_string(params.encoder.latent_width()) +
                         " != decoder input width " + std::to_string(params.decoder.latent_width()));
  }
}

bool same_shape(const Encoder& a, const Encoder& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].in_width() != b.layers[i].in_width() ||
        a.layers[i].out_width() != b.layers[i].out_width()) {
      return false;
    }
  }
  return true;
}

nn::Vector encode(const Encoder& encoder, const nn::Vector& x) {
  nn::Matrix row = x.transpose();
  return encode(encoder, row).row(0).transpose();
}

nn::Vector decode(const Decoder& decoder, const nn::Vector& z) {
  nn::Matrix row = z.transpose();
  return decode(decoder, row).row(0).transpose();
}

nn::Matrix encode(const Encoder& encoder, const nn::Matrix& x) {
  check_chain(encoder.layers, "encoder");
  nn::Matrix a = x;
  for (const auto& l : encoder.layers) a = nn::dense_forward(l, a);
  return a;
}

nn::Matrix decode(const Decoder& decoder, const nn::Matrix& z) {
  check_chain(decoder.layers, "decoder");
  nn::Matrix a = z;
  for (const auto& l : decoder.layers) a = nn::dense_forward(l, a);
  return a;
}

nn::Matrix encode_rows(const Encoder& encoder, const nn::SparseRows& data,
                       std::span<const int64_t> rows) {
  check_chain(encoder.layers, "encoder");
  nn::Matrix a = nn::dense_forward_sparse(encoder.layers[0], data, rows, nullptr);
  for (size_t l = 1; l < encoder.layers.size(); ++l) a = nn::dense_forward(encoder.layers[l], a);
  return a;
}

LatentSequenceTensor compute_latents(const Encoder& encoder, const data::BinarySequenceTensor& x) {
  check_chain(encoder.layers, "encoder");
  if (static_cast<nn::Index>(x.features()) != encoder.input_width()) {
    throw DimensionError("compute_latents: data has " + std::to_string(x.features()) +
                         " features, encoder expects " + std::to_string(encoder.input_width()));
  }
  LatentSequenceTensor out;
  out.samples = x.samples();
  out.timesteps = x.timesteps();
  out.width = static_cast<size_t>(encoder.latent_width());
  const auto rows = x.sparse_rows();
  out.values = nn::Matrix(rows.rows(), encoder.latent_width());
  constexpr int64_t kChunk = 4096;
  std::vector<int64_t> idx;
  for (int64_t start = 0; start < rows.rows(); start += kChunk) {
    const int64_t stop = std::min<int64_t>(rows.rows(), start + kChunk);
    idx.resize(static_cast<size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    out.values.middleRows(start, stop - start) = encode_rows(encoder, rows, idx);
  }
  return out;
}

double batch_loss(const BaeParams& params, const nn::SparseRows& data,
                  std::span<const int64_t> rows, BaeParams* grads, bool encoder_grads) {
  validate(params);
  if (data.width != params.encoder.input_width() ||
      data.width != params.decoder.output_width()) {
    throw DimensionError("BAE batch: data width " + std::to_string(data.width) +
                         " does not match model width " +
                         std::to_string(params.encoder.input_width()));
  }
  const auto& enc = params.encoder.layers;
  std::vector<nn::DenseCache> caches(enc.size());
  nn::Matrix a = nn::dense_forward_sparse(enc[0], data, rows, &caches[0].output);
  for (size_t l = 1; l < enc.size(); ++l) a = nn::dense_forward(enc[l], a, &caches[l]);

  const nn::Matrix target = data.dense(rows);
  const bool backprop_encoder = grads != nullptr && encoder_grads;
  nn::Matrix grad_z;
  const double loss = decoder_loss(params.decoder, a, target, grads ? &grads->decoder : nullptr,
                                   backprop_encoder ? &grad_z : nullptr);
  if (!backprop_encoder) return loss;

  nn::Matrix g = std::move(grad_z);
  for (size_t l = enc.size(); l-- > 1;) {
    g = nn::dense_backward(enc[l], caches[l], std::move(g), grads->encoder.layers[l], true);
  }
  nn::activation_backward(enc[0].activation, caches[0].output, g);
  nn::dense_backward_sparse(data, rows, g, grads->encoder.layers[0]);
  return loss;
}

double reconstruction_loss(const BaeParams& params, const nn::SparseRows& data) {
  if (data.rows() == 0) return 0.0;
  constexpr int64_t kChunk = 4096;
  std::vector<int64_t> idx;
  double total = 0.0;
  for (int64_t start = 0; start < data.rows(); start += kChunk) {
    const int64_t stop = std::min<int64_t>(data.rows(), start + kChunk);
    idx.resize(static_cast<size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    total += batch_loss(params, data, idx, nullptr) * static_cast<double>(stop - start);
  }
  return total / static_cast<double>(data.rows());
}

double reconstruction_loss(const BaeParams& params, const data::BinarySequenceTensor& x) {
  return reconstruction_loss(params, x.sparse_rows());
}

TrainReport train_local_bae(BaeParams& params, const nn::SparseRows& data,
                            const TrainOptions& options, Rng& rng) {
  validate(params);
  if (data.rows() == 0) throw DataError("train_local_bae: empty training data");
  if (options.batch_size == 0) throw InvalidArgument("train_local_bae: batch size must be positive");
  TrainReport report;
  if (options.max_epochs == 0) return report;

  std::vector<int64_t> order(static_cast<size_t>(data.rows()));
  std::iota(order.begin(), order.end(), int64_t{0});

  // With a frozen encoder the latents never change; compute them once.
  nn::Matrix frozen_latents;
  if (!options.train_encoder) frozen_latents = encode_rows(params.encoder, data, order);

  nn::Adam adam(options.adam, options.train_encoder ? nn::parameter_count(params)
                                                    : nn::parameter_count(params.decoder));
  nn::GradientTape<BaeParams> tape(params);
  size_t stalled = 0;
  for (size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (size_t start = 0; start < order.size(); start += options.batch_size) {
      const size_t stop = std::min(order.size(), start + options.batch_size);
      const std::span<const int64_t> batch(order.data() + start, stop - start);
      tape.zero();
      double loss = 0.0;
      if (options.train_encoder) {
        loss = batch_loss(params, data, batch, &tape.grads());
        nn::adam_step(adam, params, tape.grads());
      } else {
        nn::Matrix z(static_cast<nn::Index>(batch.size()), frozen_latents.cols());
        for (size_t i = 0; i < batch.size(); ++i) z.row(static_cast<nn::Index>(i)) = frozen_latents.row(batch[i]);
        loss = decoder_loss(params.decoder, z, data.dense(batch), &tape.grads().decoder, nullptr);
        nn::adam_step(adam, params.decoder, tape.grads().decoder);
      }
      sum += loss * static_cast<double>(batch.size());
    }
    const double epoch_loss = sum / static_cast<double>(order.size());
    if (!report.epoch_loss.empty() && report.epoch_loss.back() - epoch_loss < options.tolerance) {
      ++stalled;
    } else {
      stalled = 0;
    }
    report.epoch_loss.push_back(epoch_loss);
    if (options.until_converged && stalled >= options.patience) {
      report.converged = true;
      break;
    }
  }
  return report;
}

Decoder permute_decoder_inputs(const Decoder& decoder, const matchagg::Permutation& perm) {
  if (decoder.layers.empty()) throw DimensionError("permute_decoder_inputs: empty decoder");
  if (static_cast<nn::Index>(perm.size()) != decoder.latent_width()) {
    throw DimensionError("permute_decoder_inputs: permutation of size " +
                         std::to_string(perm.size()) + " for latent width " +
                         std::to_string(decoder.latent_width()));
  }
  Decoder out = decoder;
  out.layers[0].weights = perm.permute_rows(decoder.layers[0].weights);
  return out;
}

BaeParams adapt_decoder(const BaeParams& local, const Encoder& global_encoder,
                        const matchagg::Permutation& latent_permutation,
                        const nn::SparseRows& data, const AdaptOptions& options, Rng& rng) {
  if (!same_shape(local.encoder, global_encoder)) {
    throw DimensionError("adapt_decoder: global encoder shape differs from the local encoder");
  }
  BaeParams adapted;
  adapted.encoder = global_encoder;
  adapted.decoder = permute_decoder_inputs(local.decoder, latent_permutation);
  validate(adapted);

  TrainOptions phase;
  phase.until_converged = false;
  phase.batch_size = options.batch_size;
  phase.adam = options.adam;
  if (options.frozen_epochs > 0) {
    phase.max_epochs = options.frozen_epochs;
    phase.train_encoder = false;
    train_local_bae(adapted, data, phase, rng);
  }
  if (options.joint_epochs > 0) {
    phase.max_epochs = options.joint_epochs;
    phase.train_encoder = true;
    train_local_bae(adapted, data, phase, rng);
  }
  return adapted;
}

}  // namespace fedgen::bae
