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

#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "fedgen/errors.hpp"
#include "support/gradcheck.hpp"

namespace fedgen::bae {
namespace {

using data::BinarySequenceTensor;

BinarySequenceTensor random_bits(size_t n, size_t t, size_t d, double p, uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution coin(p);
  std::vector<uint8_t> bits(n * t * d), labels(n);
  for (auto& b : bits) b = coin(rng);
  for (auto& l : labels) l = coin(rng);
  return BinarySequenceTensor(n, t, d, std::move(bits), std::move(labels));
}

BaeShape small_shape(size_t d = 12) { return BaeShape{d, {8}, 4}; }

// Permutes latent columns of the last encoder layer by `perm`.
Encoder permute_latent(const Encoder& e, const matchagg::Permutation& perm) {
  Encoder out = e;
  auto& last = out.layers.back();
  last.weights = perm.permute_columns(last.weights);
  last.bias = perm.permute(last.bias);
  return out;
}

TEST(Encode, DeterministicAndBounded) {
  auto p = init_bae(small_shape(), 1);
  Rng rng(2);
  std::bernoulli_distribution coin(0.3);
  nn::Vector x(12);
  for (auto& v : x) v = coin(rng);
  auto z = encode(p.encoder, x);
  EXPECT_EQ(z, encode(p.encoder, x));
  EXPECT_EQ(z.size(), 4);
  EXPECT_LT(z.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Encode, IdentityEncoderTakesLeadingCoordinates) {
  Encoder e;
  nn::DenseLayer layer(5, 3, nn::Activation::kIdentity);
  layer.weights.topRows(3) = nn::Matrix::Identity(3, 3);
  e.layers.push_back(layer);
  nn::Vector x(5);
  x << 1, 0, 1, 1, 0;
  EXPECT_EQ(encode(e, x), x.head(3));
}

TEST(Encode, WidthMismatch) {
  auto p = init_bae(small_shape(), 1);
  EXPECT_THROW(encode(p.encoder, nn::Vector(nn::Vector::Zero(11))), DimensionError);
  EXPECT_THROW(decode(p.decoder, nn::Vector(nn::Vector::Zero(5))), DimensionError);
}

TEST(Decode, ZeroWeightsGiveHalf) {
  auto p = init_bae(small_shape(), 1);
  for (auto& l : p.decoder.layers) nn::set_zero(l);
  EXPECT_EQ(decode(p.decoder, nn::Vector(nn::Vector::Constant(4, 0.3))), nn::Vector::Constant(12, 0.5));
}

TEST(Decode, OutputsInsideUnitInterval) {
  auto p = init_bae(small_shape(), 3);
  Rng rng(4);
  std::normal_distribution<double> g(0.0, 5.0);
  for (int i = 0; i < 20; ++i) {
    nn::Vector z(4);
    for (auto& v : z) v = g(rng);
    auto x = decode(p.decoder, z);
    EXPECT_GT(x.minCoeff(), 0.0);
    EXPECT_LT(x.maxCoeff(), 1.0);
  }
}

TEST(Shape, ValidateRejectsMismatch) {
  auto p = init_bae(small_shape(), 1);
  p.decoder.layers[0] = nn::DenseLayer(5, 8, nn::Activation::kRelu);
  EXPECT_THROW(validate(p), DimensionError);
}

TEST(BatchLoss, GradientMatchesFiniteDifferences) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    auto p = init_bae(BaeShape{10, {6}, 3}, seed);
    auto x = random_bits(3, 2, 10, 0.3, seed + 100);
    auto rows = x.sparse_rows();
    std::vector<int64_t> batch{0, 3, 5, 1};
    BaeParams grads = nn::zeros_like(p);
    batch_loss(p, rows, batch, &grads);
    auto loss = [&] { return batch_loss(p, rows, batch, nullptr); };
    EXPECT_LT(testing::gradient_relative_error(p, grads, loss), 1e-5) << "seed " << seed;
  }
}

TEST(BatchLoss, AgreesWithDenseForward) {
  auto p = init_bae(small_shape(), 5);
  auto x = random_bits(4, 3, 12, 0.2, 6);
  auto rows = x.sparse_rows();
  std::vector<int64_t> all(12);
  std::iota(all.begin(), all.end(), 0);
  nn::Matrix dense = rows.dense(all);
  nn::Matrix prob = decode(p.decoder, encode(p.encoder, dense));
  EXPECT_NEAR(batch_loss(p, rows, all, nullptr), nn::bce_loss_batch(dense, prob) / 12.0, 1e-12);
  EXPECT_NEAR(reconstruction_loss(p, x), nn::bce_loss_batch(dense, prob) / 12.0, 1e-12);
}

TEST(Train, ZeroEpochsIsNoOp) {
  auto p = init_bae(small_shape(), 7);
  auto before = nn::flatten(p);
  auto x = random_bits(5, 2, 12, 0.2, 8);
  Rng rng(1);
  TrainOptions opt;
  opt.max_epochs = 0;
  train_local_bae(p, x.sparse_rows(), opt, rng);
  EXPECT_EQ(nn::flatten(p), before);
}

TEST(Train, EmptyDataRejected) {
  auto p = init_bae(small_shape(), 7);
  Rng rng(1);
  EXPECT_THROW(train_local_bae(p, BinarySequenceTensor(0, 2, 12).sparse_rows(), {}, rng), DataError);
}

TEST(Train, LossDoesNotIncrease) {
  auto p = init_bae(small_shape(), 9);
  auto x = random_bits(40, 4, 12, 0.2, 10);
  const double before = reconstruction_loss(p, x);
  Rng rng(2);
  TrainOptions opt;
  opt.max_epochs = 10;
  opt.until_converged = false;
  opt.batch_size = 16;
  opt.adam.learning_rate = 1e-4;
  train_local_bae(p, x.sparse_rows(), opt, rng);
  EXPECT_LE(reconstruction_loss(p, x), before + 1e-4);
}

TEST(Train, ConstantZeroDataLearnsZeros) {
  auto p = init_bae(small_shape(), 11);
  BinarySequenceTensor x(30, 4, 12);
  Rng rng(3);
  TrainOptions opt;
  opt.batch_size = 32;
  opt.adam.learning_rate = 1e-2;
  auto report = train_local_bae(p, x.sparse_rows(), opt, rng);
  EXPECT_LT(reconstruction_loss(p, x), 0.05);
  EXPECT_LE(report.epoch_loss.size(), 200u);
}

TEST(Train, OverfitsTinySet) {
  auto p = init_bae(BaeShape{16, {32}, 12}, 12);
  auto x = random_bits(20, 1, 16, 0.3, 13);
  Rng rng(4);
  TrainOptions opt;
  opt.batch_size = 20;
  opt.max_epochs = 3000;
  opt.until_converged = false;
  opt.adam.learning_rate = 1e-2;
  train_local_bae(p, x.sparse_rows(), opt, rng);
  size_t right = 0;
  for (size_t n = 0; n < 20; ++n) {
    nn::Vector in(16);
    for (size_t d = 0; d < 16; ++d) in[d] = x.at(n, 0, d);
    auto out = decode(p.decoder, encode(p.encoder, in));
    for (size_t d = 0; d < 16; ++d) right += (out[d] > 0.5) == (in[d] > 0.5);
  }
  EXPECT_GE(right, static_cast<size_t>(0.9 * 20 * 16));
}

TEST(Train, SeedDeterministic) {
  auto x = random_bits(30, 3, 12, 0.2, 14);
  TrainOptions opt;
  opt.max_epochs = 5;
  opt.batch_size = 16;
  auto a = init_bae(small_shape(), 15), b = init_bae(small_shape(), 15);
  Rng ra(5), rb(5);
  train_local_bae(a, x.sparse_rows(), opt, ra);
  train_local_bae(b, x.sparse_rows(), opt, rb);
  EXPECT_EQ(nn::flatten(a), nn::flatten(b));
}

TEST(Train, FrozenEncoderLeavesEncoderUntouched) {
  auto p = init_bae(small_shape(), 16);
  auto enc = nn::flatten(p.encoder);
  auto dec = nn::flatten(p.decoder);
  auto x = random_bits(30, 3, 12, 0.2, 17);
  Rng rng(6);
  TrainOptions opt;
  opt.max_epochs = 3;
  opt.train_encoder = false;
  train_local_bae(p, x.sparse_rows(), opt, rng);
  EXPECT_EQ(nn::flatten(p.encoder), enc);
  EXPECT_NE(nn::flatten(p.decoder), dec);
}

TEST(Permutation, DecodeEncodeInvariant) {
  auto p = init_bae(small_shape(), 18);
  auto perm = matchagg::Permutation({2, 0, 3, 1});
  BaeParams q{permute_latent(p.encoder, perm), permute_decoder_inputs(p.decoder, perm)};
  auto x = random_bits(10, 1, 12, 0.3, 19);
  std::vector<int64_t> all(10);
  std::iota(all.begin(), all.end(), 0);
  nn::Matrix dense = x.sparse_rows().dense(all);
  nn::Matrix a = decode(p.decoder, encode(p.encoder, dense));
  nn::Matrix b = decode(q.decoder, encode(q.encoder, dense));
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Permutation, SizeMismatchRejected) {
  auto p = init_bae(small_shape(), 18);
  EXPECT_THROW(permute_decoder_inputs(p.decoder, matchagg::Permutation::identity(3)),
               DimensionError);
  EXPECT_THROW(matchagg::Permutation({0, 0, 1, 2}), InvalidArgument);
}

TEST(Adapt, IdentityIsNoOpBeforeFineTuning) {
  auto p = init_bae(small_shape(), 20);
  auto x = random_bits(20, 2, 12, 0.2, 21);
  AdaptOptions opt;
  opt.frozen_epochs = 0;
  opt.joint_epochs = 0;
  Rng rng(7);
  auto q = adapt_decoder(p, p.encoder, matchagg::Permutation::identity(4), x.sparse_rows(), opt, rng);
  EXPECT_EQ(reconstruction_loss(q, x), reconstruction_loss(p, x));
}

TEST(Adapt, MissingDecoderPermutationHurts) {
  auto p = init_bae(small_shape(), 22);
  auto x = random_bits(60, 2, 12, 0.25, 23);
  Rng rng(8);
  TrainOptions train;
  train.batch_size = 32;
  train.adam.learning_rate = 5e-3;
  train_local_bae(p, x.sparse_rows(), train, rng);
  auto perm = matchagg::Permutation({1, 2, 3, 0});
  Encoder permuted = permute_latent(p.encoder, perm);
  AdaptOptions none{0, 0};
  auto matched = adapt_decoder(p, permuted, perm, x.sparse_rows(), none, rng);
  auto unmatched = adapt_decoder(p, permuted, matchagg::Permutation::identity(4), x.sparse_rows(), none, rng);
  EXPECT_NEAR(reconstruction_loss(matched, x), reconstruction_loss(p, x), 1e-12);
  EXPECT_GT(reconstruction_loss(unmatched, x), reconstruction_loss(matched, x));
}

TEST(Adapt, ShapeMismatchRejected) {
  auto p = init_bae(small_shape(), 24);
  auto other = init_bae(BaeShape{12, {6}, 4}, 25);
  Rng rng(9);
  EXPECT_THROW(adapt_decoder(p, other.encoder, matchagg::Permutation::identity(4),
                             random_bits(2, 1, 12, 0.2, 1).sparse_rows(), {}, rng),
               DimensionError);
}

TEST(Latents, ShapesAndPurity) {
  auto p = init_bae(small_shape(), 26);
  auto empty = compute_latents(p.encoder, BinarySequenceTensor(0, 5, 12));
  EXPECT_EQ(empty.samples, 0u);
  EXPECT_EQ(empty.timesteps, 5u);
  EXPECT_EQ(empty.width, 4u);
  EXPECT_EQ(empty.values.rows(), 0);

  auto x = random_bits(3, 2, 12, 0.3, 27);
  std::vector<size_t> dup{0, 0, 1};
  auto h = compute_latents(p.encoder, x.select(dup));
  EXPECT_EQ(h.step(0, 1), h.step(1, 1));
  EXPECT_EQ(compute_latents(p.encoder, x).values, compute_latents(p.encoder, x).values);
  EXPECT_THROW(compute_latents(p.encoder, BinarySequenceTensor(1, 1, 11)), DimensionError);
}

}  // namespace
}  // namespace fedgen::bae
