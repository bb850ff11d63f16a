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

// Binary autoencoder applied independently to every observation (n, t):
// an MLP encoder to a tanh latent of width d and a mirrored decoder that
// emits Bernoulli parameters.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedgen/nn.hpp"
#include "fedgen/permutation.hpp"
#include "fedgen/synthdata.hpp"

namespace fedgen::bae {

struct Encoder {
  std::vector<nn::DenseLayer> layers;

  nn::Index input_width() const { return layers.front().in_width(); }
  nn::Index latent_width() const { return layers.back().out_width(); }

  nn::TensorList tensors();
  nn::ConstTensorList tensors() const;
};

struct Decoder {
  std::vector<nn::DenseLayer> layers;

  nn::Index latent_width() const { return layers.front().in_width(); }
  nn::Index output_width() const { return layers.back().out_width(); }

  nn::TensorList tensors();
  nn::ConstTensorList tensors() const;
};

struct BaeParams {
  Encoder encoder;
  Decoder decoder;

  nn::TensorList tensors();
  nn::ConstTensorList tensors() const;
};

// D -> hidden... -> latent, mirrored for the decoder.
struct BaeShape {
  size_t input_width = 256;
  std::vector<size_t> hidden_widths{128};
  size_t latent_width = 32;
};

// Hidden layers relu, latent tanh, decoder output sigmoid; uniform fan-in
// initialization.
BaeParams init_bae(const BaeShape& shape, uint64_t seed);

// Throws DimensionError unless encoder output width equals decoder input
// width and the layer chain is consistent.
void validate(const BaeParams& params);
bool same_shape(const Encoder& a, const Encoder& b);

nn::Vector encode(const Encoder& encoder, const nn::Vector& x);
nn::Vector decode(const Decoder& decoder, const nn::Vector& z);
nn::Matrix encode(const Encoder& encoder, const nn::Matrix& x);
nn::Matrix decode(const Decoder& decoder, const nn::Matrix& z);
nn::Matrix encode_rows(const Encoder& encoder, const nn::SparseRows& data,
                       std::span<const int64_t> rows);

// Latent trajectories, row n * T + t holds h_{n,t}.
struct LatentSequenceTensor {
  size_t samples = 0;
  size_t timesteps = 0;
  size_t width = 0;
  nn::Matrix values;  // (samples * timesteps) x width

  auto step(size_t n, size_t t) const { return values.row(static_cast<nn::Index>(n * timesteps + t)); }
};

LatentSequenceTensor compute_latents(const Encoder& encoder, const data::BinarySequenceTensor& x);

// Mean over rows of the per-row mean BCE. When `grads` is non-null the
// gradient of that mean is accumulated into it (encoder part skipped when
// `encoder_grads` is false).
double batch_loss(const BaeParams& params, const nn::SparseRows& data,
                  std::span<const int64_t> rows, BaeParams* grads, bool encoder_grads = true);

// Mean BCE over every observation.
double reconstruction_loss(const BaeParams& params, const nn::SparseRows& data);
double reconstruction_loss(const BaeParams& params, const data::BinarySequenceTensor& x);

struct TrainOptions {
  size_t max_epochs = 200;
  // Stop once the epoch-over-epoch improvement stays below `tolerance` for
  // `patience` consecutive epochs.
  bool until_converged = true;
  double tolerance = 1e-4;
  size_t patience = 3;
  size_t batch_size = 512;
  nn::AdamConfig adam{};
  bool train_encoder = true;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // running mean of batch losses per epoch
  bool converged = false;
};

// Mini-batch Adam on the mean BCE over (n, t) pairs. Throws DataError for
// empty data. max_epochs == 0 leaves `params` untouched.
TrainReport train_local_bae(BaeParams& params, const nn::SparseRows& data,
                            const TrainOptions& options, Rng& rng);

// Moves row i of the first decoder layer to row perm[i], matching an encoder
// whose latent column i moved to perm[i].
Decoder permute_decoder_inputs(const Decoder& decoder, const matchagg::Permutation& perm);

struct AdaptOptions {
  size_t frozen_epochs = 20;
  size_t joint_epochs = 5;
  size_t batch_size = 512;
  nn::AdamConfig adam{};
};

// Replaces the encoder by `global_encoder`, permutes the decoder inputs by
// the server's latent permutation, fine-tunes the decoder with the encoder
// frozen, then fine-tunes both jointly.
BaeParams adapt_decoder(const BaeParams& local, const Encoder& global_encoder,
                        const matchagg::Permutation& latent_permutation,
                        const nn::SparseRows& data, const AdaptOptions& options, Rng& rng);

}  // namespace fedgen::bae
