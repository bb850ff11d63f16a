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

#include "fedgen/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fedgen/errors.hpp"
#include "support/gradcheck.hpp"

namespace fedgen::nn {
namespace {

Matrix random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

TEST(DenseForward, IdentityWeights) {
  DenseLayer layer(2, 2, Activation::kIdentity);
  layer.weights = Matrix::Identity(2, 2);
  Vector x(2);
  x << 1, 2;
  EXPECT_EQ(dense_forward(layer, x), x);
}

TEST(DenseForward, SigmoidOfZeroIsHalf) {
  DenseLayer layer(3, 5, Activation::kSigmoid);
  Vector x = Vector::Constant(3, 7.0);
  EXPECT_EQ(dense_forward(layer, x), Vector::Constant(5, 0.5));
}

TEST(DenseForward, HandArithmetic) {
  DenseLayer layer(2, 1, Activation::kIdentity);
  layer.weights << 1, 1;
  layer.bias << 0.5;
  Vector x(2);
  x << 2, 3;
  EXPECT_DOUBLE_EQ(dense_forward(layer, x)[0], 5.5);
}

TEST(DenseForward, ShapeMismatchNamesBothShapes) {
  DenseLayer layer(3, 2, Activation::kRelu);
  try {
    dense_forward(layer, Vector(Vector::Zero(4)));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(1x4)"), std::string::npos);
    EXPECT_NE(msg.find("(3x2)"), std::string::npos);
  }
}

TEST(DenseForward, RepeatedCallsBitIdentical) {
  Rng rng(1);
  DenseLayer layer(6, 4, Activation::kTanh);
  init_uniform(layer, rng);
  Matrix x = random_matrix(5, 6, rng);
  EXPECT_EQ(dense_forward(layer, x), dense_forward(layer, x));
}

TEST(DenseForward, SparseMatchesDense) {
  Rng rng(2);
  DenseLayer layer(10, 4, Activation::kRelu);
  init_uniform(layer, rng);
  SparseRows rows;
  rows.width = 10;
  std::bernoulli_distribution coin(0.3);
  for (int r = 0; r < 6; ++r) {
    for (int d = 0; d < 10; ++d) {
      if (coin(rng)) rows.indices.push_back(d);
    }
    rows.offsets.push_back(static_cast<int64_t>(rows.indices.size()));
  }
  std::vector<int64_t> pick{4, 0, 2};
  Matrix expected = dense_forward(layer, rows.dense(pick));
  EXPECT_LT((dense_forward_sparse(layer, rows, pick, nullptr) - expected).cwiseAbs().maxCoeff(),
            1e-14);
}

// Two-layer MLP with a weighted-sum loss, for finite-difference checks.
struct TinyMlp {
  DenseLayer a, b;
  TensorList tensors() {
    auto t = a.tensors();
    auto u = b.tensors();
    t.insert(t.end(), u.begin(), u.end());
    return t;
  }
  ConstTensorList tensors() const {
    auto t = a.tensors();
    auto u = b.tensors();
    t.insert(t.end(), u.begin(), u.end());
    return t;
  }
};

class DenseGradient : public ::testing::TestWithParam<Activation> {};

TEST_P(DenseGradient, MatchesFiniteDifferences) {
  Rng rng(3);
  TinyMlp mlp{DenseLayer(5, 4, GetParam()), DenseLayer(4, 3, Activation::kSigmoid)};
  init_uniform(mlp.a, rng);
  init_uniform(mlp.b, rng);
  const Matrix x = random_matrix(6, 5, rng);
  const Matrix r = random_matrix(6, 3, rng);
  auto loss = [&] {
    Matrix h = dense_forward(mlp.b, dense_forward(mlp.a, x));
    return (h.array() * r.array()).sum();
  };
  TinyMlp grads = zeros_like(mlp);
  DenseCache ca, cb;
  dense_forward(mlp.b, dense_forward(mlp.a, x, &ca), &cb);
  Matrix g = dense_backward(mlp.b, cb, r, grads.b);
  dense_backward(mlp.a, ca, g, grads.a, false);
  EXPECT_LT(testing::gradient_relative_error(mlp, grads, loss), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Activations, DenseGradient,
                         ::testing::Values(Activation::kIdentity, Activation::kSigmoid,
                                           Activation::kTanh, Activation::kRelu));

TEST(Lstm, ZeroWeightsGiveZeroOutput) {
  LstmBackbone bb(3, 4);
  Matrix out;
  Matrix x = Matrix::Constant(2, 3, 0.7);
  LstmState s = lstm_step(bb, LstmState::zeros(2, 4), x, out);
  EXPECT_EQ(out, Matrix::Zero(2, 4));
  EXPECT_EQ(s.memory[0], Matrix::Zero(2, 4));
  EXPECT_EQ(s.memory[1], Matrix::Zero(2, 4));
}

TEST(Lstm, Deterministic) {
  Rng rng(4);
  LstmBackbone bb(3, 5);
  init_lstm(bb, rng);
  Matrix x = random_matrix(2, 3, rng);
  LstmState s0 = LstmState::zeros(2, 5);
  s0.hidden[0] = random_matrix(2, 5, rng);
  Matrix o1, o2;
  LstmState a = lstm_step(bb, s0, x, o1);
  LstmState b = lstm_step(bb, s0, x, o2);
  EXPECT_EQ(o1, o2);
  EXPECT_EQ(a.memory[1], b.memory[1]);
}

TEST(Lstm, RejectsUninitializedState) {
  LstmBackbone bb(3, 4);
  Matrix out;
  EXPECT_THROW(lstm_step(bb, LstmState{}, Matrix::Zero(1, 3), out), InvalidArgument);
  EXPECT_THROW(lstm_step(bb, LstmState::zeros(1, 4), Matrix::Zero(1, 2), out), DimensionError);
}

TEST(Lstm, ForgetBiasInitializedToOnePlusUniform) {
  Rng rng(5);
  LstmBackbone bb(3, 4);
  init_lstm(bb, rng);
  for (const auto& c : bb.cells) {
    EXPECT_GT(c.bias.segment(4, 4).minCoeff(), 0.0);
    EXPECT_LT(c.bias.segment(0, 4).cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(Lstm, BackpropThroughTimeMatchesFiniteDifferences) {
  Rng rng(6);
  constexpr Index kIn = 3, kH = 4, kBatch = 2, kSteps = 3;
  LstmBackbone bb(kIn, kH);
  init_lstm(bb, rng);
  std::vector<Matrix> xs, rs;
  for (int t = 0; t < kSteps; ++t) {
    xs.push_back(random_matrix(kBatch, kIn, rng));
    rs.push_back(random_matrix(kBatch, kH, rng));
  }
  auto loss = [&] {
    LstmState s = LstmState::zeros(kBatch, kH);
    double total = 0.0;
    Matrix out;
    for (int t = 0; t < kSteps; ++t) {
      s = lstm_step(bb, s, xs[t], out);
      total += (out.array() * rs[t].array()).sum();
    }
    return total;
  };
  std::vector<LstmStepCache> caches(kSteps);
  LstmState s = LstmState::zeros(kBatch, kH);
  Matrix out;
  for (int t = 0; t < kSteps; ++t) s = lstm_step(bb, s, xs[t], out, &caches[t]);
  LstmBackbone grads = zeros_like(bb);
  LstmStateGrad carry = LstmStateGrad::zeros(kBatch, kH);
  for (int t = kSteps - 1; t >= 0; --t) carry = lstm_step_backward(bb, caches[t], rs[t], carry, grads);
  EXPECT_LT(testing::gradient_relative_error(bb, grads, loss), 1e-6);
}

TEST(Lstm, InputGradientMatchesFiniteDifferences) {
  Rng rng(7);
  LstmBackbone bb(3, 4);
  init_lstm(bb, rng);
  Matrix x = random_matrix(1, 3, rng);
  Matrix r = random_matrix(1, 4, rng);
  LstmStepCache cache;
  Matrix out;
  lstm_step(bb, LstmState::zeros(1, 4), x, out, &cache);
  LstmBackbone grads = zeros_like(bb);
  Matrix gx;
  lstm_step_backward(bb, cache, r, LstmStateGrad::zeros(1, 4), grads, &gx);
  for (Index j = 0; j < 3; ++j) {
    Matrix up = x, down = x;
    up(0, j) += testing::kFdStep;
    down(0, j) -= testing::kFdStep;
    lstm_step(bb, LstmState::zeros(1, 4), up, out);
    const double fu = (out.array() * r.array()).sum();
    lstm_step(bb, LstmState::zeros(1, 4), down, out);
    const double fd = (out.array() * r.array()).sum();
    EXPECT_NEAR(gx(0, j), (fu - fd) / (2 * testing::kFdStep), 1e-8);
  }
}

TEST(Bce, PerfectReconstructionIsNearZero) {
  Vector x(3);
  x << 1, 0, 1;
  const double loss = bce_loss(x, x);
  EXPECT_NEAR(loss, -std::log(1.0 - kProbClamp), 1e-15);
  EXPECT_LT(loss, 2 * kProbClamp * 3);
}

TEST(Bce, HalfProbabilityIsLn2) {
  EXPECT_NEAR(bce_loss(Vector::Ones(1), Vector::Constant(1, 0.5)), std::log(2.0), 1e-15);
}

TEST(Bce, MatchesNaiveLoop) {
  Rng rng(8);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::bernoulli_distribution coin(0.4);
  Vector x(10), p(10);
  double naive = 0.0;
  for (int i = 0; i < 10; ++i) {
    x[i] = coin(rng) ? 1.0 : 0.0;
    p[i] = u(rng);
    naive += x[i] == 1.0 ? -std::log(p[i]) : -std::log(1.0 - p[i]);
  }
  EXPECT_NEAR(bce_loss(x, p), naive / 10.0, 1e-12);
}

TEST(Bce, LengthMismatch) { EXPECT_THROW(bce_loss(Vector::Ones(2), Vector::Ones(3)), DimensionError); }

TEST(Bce, BatchAgreesWithVectorForm) {
  Rng rng(9);
  Matrix target = (random_matrix(4, 6, rng).array() > 0.0).cast<double>();
  Matrix prob = random_matrix(4, 6, rng).unaryExpr([](double v) { return sigmoid(v); });
  double sum = 0.0;
  for (Index r = 0; r < 4; ++r) sum += bce_loss(target.row(r).transpose(), prob.row(r).transpose());
  EXPECT_NEAR(bce_loss_batch(target, prob), sum, 1e-12);
}

TEST(Bce, ClampedBitsProperty) {
  Rng rng(10);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 20; ++trial) {
    Vector x(32);
    for (Index i = 0; i < 32; ++i) x[i] = coin(rng) ? 1.0 : 0.0;
    EXPECT_LT(bce_loss(x, x), 2 * kProbClamp * 32);
  }
}

Vector v1(double a) { return Vector::Constant(1, a); }

TEST(GaussianKl, AnalyticCases) {
  EXPECT_EQ(gaussian_kl(v1(0), v1(1), v1(0), v1(1)), 0.0);
  EXPECT_NEAR(gaussian_kl(v1(1), v1(1), v1(0), v1(1)), 0.5, 1e-12);
  EXPECT_NEAR(gaussian_kl(v1(0), v1(2), v1(0), v1(1)), 0.5 * (2.0 - 1.0 - std::log(2.0)), 1e-12);
  EXPECT_NEAR(gaussian_kl(v1(0), v1(2), v1(0), v1(1)), 0.153426, 1e-6);
}

TEST(GaussianKl, MonteCarloCrossCheck) {
  Rng rng(11);
  std::normal_distribution<double> g(0.0, std::sqrt(2.0));
  constexpr int kDraws = 200000;
  double acc = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double z = g(rng);
    // log q(z) - log p(z) for q = N(0,2), p = N(0,1)
    acc += -0.5 * std::log(2.0) - z * z / 4.0 + z * z / 2.0;
  }
  EXPECT_NEAR(acc / kDraws, gaussian_kl(v1(0), v1(2), v1(0), v1(1)), 1e-2);
}

TEST(GaussianKl, NonNegativeAndZeroOnEqual) {
  Rng rng(12);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    Vector mq(4), vq(4), mp(4), vp(4);
    for (int i = 0; i < 4; ++i) {
      mq[i] = g(rng);
      mp[i] = g(rng);
      vq[i] = std::exp(g(rng));
      vp[i] = std::exp(g(rng));
    }
    EXPECT_GE(gaussian_kl(mq, vq, mp, vp), 0.0);
    EXPECT_EQ(gaussian_kl(mq, vq, mq, vq), 0.0);
  }
}

TEST(GaussianKl, RejectsNonPositiveVariance) {
  EXPECT_THROW(gaussian_kl(v1(0), v1(0), v1(0), v1(1)), InvalidArgument);
  EXPECT_THROW(gaussian_kl(v1(0), v1(1), v1(0), v1(-1)), InvalidArgument);
}

TEST(Reparameterize, Cases) {
  Vector mu(2), noise(2);
  mu << 0.4, -2;
  noise << 0.3, -1.2;
  EXPECT_EQ(reparameterize(mu, Vector::Zero(2), noise), mu);
  EXPECT_EQ(reparameterize(Vector::Zero(2), Vector::Ones(2), noise), noise);
  EXPECT_THROW(reparameterize(mu, Vector::Ones(3), noise), DimensionError);
}

TEST(Reparameterize, MonteCarloMoments) {
  Rng rng(13);
  std::normal_distribution<double> g;
  Vector mu(2), sigma(2);
  mu << 1.5, -0.5;
  sigma << 0.7, 2.0;
  constexpr int kDraws = 100000;
  Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
  for (int i = 0; i < kDraws; ++i) {
    Vector noise(2);
    noise << g(rng), g(rng);
    Vector z = reparameterize(mu, sigma, noise);
    sum += z;
    sq += z.cwiseProduct(z);
  }
  for (int j = 0; j < 2; ++j) {
    const double mean = sum[j] / kDraws;
    const double sd = std::sqrt(sq[j] / kDraws - mean * mean);
    EXPECT_NEAR(mean, mu[j], 3 * sigma[j] / std::sqrt(kDraws));
    EXPECT_NEAR(sd, sigma[j], 3 * sigma[j] / std::sqrt(2.0 * kDraws));
  }
}

TEST(GradientTape, ZeroAndAdditivity) {
  Rng rng(14);
  DenseLayer layer(3, 2, Activation::kTanh);
  init_uniform(layer, rng);
  const Matrix x1 = random_matrix(2, 3, rng), x2 = random_matrix(3, 3, rng);
  const Matrix r1 = random_matrix(2, 2, rng), r2 = random_matrix(3, 2, rng);
  auto accumulate = [&](DenseLayer& g, const Matrix& x, const Matrix& r) {
    DenseCache c;
    dense_forward(layer, x, &c);
    dense_backward(layer, c, r, g, false);
  };
  GradientTape<DenseLayer> both(layer), first(layer), second(layer);
  accumulate(both.grads(), x1, r1);
  accumulate(both.grads(), x2, r2);
  accumulate(first.grads(), x1, r1);
  accumulate(second.grads(), x2, r2);
  EXPECT_LT((both.grads().weights - first.grads().weights - second.grads().weights).cwiseAbs().maxCoeff(),
            1e-14);
  both.zero();
  for (const auto& t : both.grads().tensors()) {
    for (double v : t) EXPECT_EQ(v, 0.0);
  }
}

TEST(AdamOptimizer, FirstStepMovesByLearningRate) {
  DenseLayer layer(2, 1, Activation::kIdentity);
  DenseLayer grads = zeros_like(layer);
  grads.weights << 3.0, -0.2;
  grads.bias << 0.0;
  Adam opt(AdamConfig{}, parameter_count(layer));
  adam_step(opt, layer, grads);
  EXPECT_NEAR(layer.weights(0, 0), -1e-3, 1e-9);
  EXPECT_NEAR(layer.weights(1, 0), 1e-3, 1e-9);
  EXPECT_EQ(layer.bias[0], 0.0);
  EXPECT_EQ(opt.steps_taken(), 1);
}

TEST(AdamOptimizer, MinimizesQuadratic) {
  DenseLayer layer(1, 1, Activation::kIdentity);
  layer.weights << 5.0;
  Adam opt(AdamConfig{0.05}, parameter_count(layer));
  for (int i = 0; i < 2000; ++i) {
    DenseLayer g = zeros_like(layer);
    g.weights(0, 0) = 2.0 * (layer.weights(0, 0) - 1.0);
    g.bias[0] = 2.0 * layer.bias[0];
    adam_step(opt, layer, g);
  }
  EXPECT_NEAR(layer.weights(0, 0), 1.0, 1e-3);
}

TEST(FlatParams, RoundTrip) {
  Rng rng(15);
  DenseLayer layer(4, 3, Activation::kRelu);
  init_uniform(layer, rng);
  DenseLayer copy = zeros_like(layer);
  assign_flat(copy, flatten(layer));
  EXPECT_EQ(copy.weights, layer.weights);
  EXPECT_EQ(copy.bias, layer.bias);
  std::vector<double> short_vec(3);
  EXPECT_THROW(assign_flat(copy, short_vec), DimensionError);
}

}  // namespace
}  // namespace fedgen::nn
