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

// Minimal fp64 numeric core: dense layers, a two-cell LSTM, the losses used
// by the two generative stages, and an Adam optimizer. Gradients are written
// by hand for the fixed architectures used in this project.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedgen/random.hpp"

namespace fedgen::nn {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Mutable / read-only views over every trainable tensor of a model, in a
// fixed order. Generic code (optimizers, aggregation, checkpoints) works on
// these lists.
using TensorList = std::vector<std::span<double>>;
using ConstTensorList = std::vector<std::span<const double>>;

template <class P>
concept Parametric = requires(P& p, const P& cp) {
  { p.tensors() } -> std::same_as<TensorList>;
  { cp.tensors() } -> std::same_as<ConstTensorList>;
};

inline std::span<double> view(Matrix& m) { return {m.data(), static_cast<size_t>(m.size())}; }
inline std::span<double> view(Vector& v) { return {v.data(), static_cast<size_t>(v.size())}; }
inline std::span<const double> view(const Matrix& m) {
  return {m.data(), static_cast<size_t>(m.size())};
}
inline std::span<const double> view(const Vector& v) {
  return {v.data(), static_cast<size_t>(v.size())};
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);
void require_length(Index got, Index want, const char* what);

// ---------------------------------------------------------------- layers

enum class Activation { kIdentity, kSigmoid, kTanh, kRelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

double sigmoid(double x);

// Applies `a` elementwise in place.
void activate(Activation a, Matrix& m);

// Multiplies `grad` (dL/doutput) by the activation derivative expressed in
// terms of the activation output.
void activation_backward(Activation a, const Matrix& output, Matrix& grad);

// A fully connected layer. Column i of `weights` holds the incoming weights
// of output neuron i, so a batch forward pass is X * W + 1 b^T.
struct DenseLayer {
  Matrix weights;  // in_width x out_width
  Vector bias;     // out_width
  Activation activation = Activation::kIdentity;

  DenseLayer() = default;
  DenseLayer(Index in_width, Index out_width, Activation act);

  Index in_width() const { return weights.rows(); }
  Index out_width() const { return weights.cols(); }

  TensorList tensors();
  ConstTensorList tensors() const;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and bias.
void init_uniform(DenseLayer& layer, Rng& rng);

// Saved state of a batch forward pass.
struct DenseCache {
  Matrix input;
  Matrix output;
};

Vector dense_forward(const DenseLayer& layer, const Vector& input);

// Batch forward; rows of `input` are samples. Fills `cache` when non-null.
Matrix dense_forward(const DenseLayer& layer, const Matrix& input, DenseCache* cache = nullptr);

// Accumulates parameter gradients into `grads` (same shape as `layer`) and
// returns dL/dinput. `grad_output` is dL/doutput and is consumed.
Matrix dense_backward(const DenseLayer& layer, const DenseCache& cache, Matrix grad_output,
                      DenseLayer& grads, bool want_input_grad = true);

// As dense_backward, but `grad_preact` is already dL/d(pre-activation).
Matrix dense_backward_preact(const DenseLayer& layer, const Matrix& input,
                             const Matrix& grad_preact, DenseLayer& grads,
                             bool want_input_grad = true);

// Compressed rows of a binary matrix: row r is active at
// indices[offsets[r] .. offsets[r+1]).
struct SparseRows {
  Index width = 0;
  std::vector<int64_t> offsets{0};
  std::vector<int32_t> indices;

  Index rows() const { return static_cast<Index>(offsets.size()) - 1; }
  // Copies the selected rows into a dense 0/1 matrix.
  Matrix dense(std::span<const int64_t> rows) const;
};

// Forward pass of a layer whose input batch is binary and sparse. The result
// matches dense_forward on the densified batch.
Matrix dense_forward_sparse(const DenseLayer& layer, const SparseRows& data,
                            std::span<const int64_t> rows, Matrix* output_cache);

// Parameter-gradient accumulation for a layer with sparse binary input.
// `grad_preact` is dL/d(pre-activation).
void dense_backward_sparse(const SparseRows& data, std::span<const int64_t> rows,
                           const Matrix& grad_preact, DenseLayer& grads);

// ------------------------------------------------------------------ LSTM

// One recurrent cell. Gates are laid out [input | forget | cell | output],
// each `hidden` columns wide.
struct LstmCell {
  Matrix w_input;   // in_width x 4H
  Matrix w_hidden;  // H x 4H
  Vector bias;      // 4H

  Index hidden_width() const { return w_hidden.rows(); }
  Index in_width() const { return w_input.rows(); }
};

// Two stacked LSTM cells; the hidden vector of the top cell is the output.
struct LstmBackbone {
  std::array<LstmCell, 2> cells;

  LstmBackbone() = default;
  LstmBackbone(Index input_width, Index hidden_width);

  Index input_width() const { return cells[0].in_width(); }
  Index hidden_width() const { return cells[1].hidden_width(); }

  TensorList tensors();
  ConstTensorList tensors() const;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) gate weights with fan_in =
// in_width + H, forget-gate bias +1.
void init_lstm(LstmBackbone& backbone, Rng& rng);

// Recurrent state for a batch: per-cell hidden and memory, batch x H.
struct LstmState {
  std::array<Matrix, 2> hidden;
  std::array<Matrix, 2> memory;

  static LstmState zeros(Index batch, Index hidden_width);
  Index batch() const { return hidden[0].rows(); }
};

struct LstmCellCache {
  Matrix input, hidden_prev, memory_prev;
  Matrix gate_i, gate_f, gate_g, gate_o;
  Matrix memory, memory_tanh;
};

struct LstmStepCache {
  std::array<LstmCellCache, 2> cells;
};

// Advances the state by one step. Returns the new state; `output` is the top
// cell's hidden matrix.
LstmState lstm_step(const LstmBackbone& backbone, const LstmState& state, const Matrix& input,
                    Matrix& output, LstmStepCache* cache = nullptr);

// Gradient flowing into a state (what the following step sends back).
struct LstmStateGrad {
  std::array<Matrix, 2> hidden;
  std::array<Matrix, 2> memory;

  static LstmStateGrad zeros(Index batch, Index hidden_width);
};

// Backward through one step. `grad_output` is dL/d(top hidden) from outside
// the recurrence and `grad_next` the gradient arriving from step t+1.
// Accumulates parameter gradients and returns the gradient for step t-1;
// dL/dinput is written to `grad_input` when non-null.
LstmStateGrad lstm_step_backward(const LstmBackbone& backbone, const LstmStepCache& cache,
                                 const Matrix& grad_output, const LstmStateGrad& grad_next,
                                 LstmBackbone& grads, Matrix* grad_input = nullptr);

// ---------------------------------------------------------------- losses

inline constexpr double kProbClamp = 1e-7;

// Mean over D of binary cross-entropy, probabilities clamped to
// [kProbClamp, 1 - kProbClamp].
double bce_loss(const Vector& target, const Vector& prob);

// Sum over batch rows of the per-row mean BCE. `prob` holds sigmoid outputs;
// when `grad_logits` is non-null it receives d(sum)/d(logit), which is zero
// where the clamp is active.
double bce_loss_batch(const Matrix& target, const Matrix& prob, Matrix* grad_logits = nullptr);

// KL(N(mu_q, var_q) || N(mu_p, var_p)) for diagonal Gaussians, summed over
// dimensions. Throws InvalidArgument on non-positive variance.
double gaussian_kl(const Vector& mu_q, const Vector& var_q, const Vector& mu_p,
                   const Vector& var_p);

// mu + sigma * noise.
Vector reparameterize(const Vector& mu, const Vector& sigma, const Vector& noise);

// ------------------------------------------------------------- optimizer

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, size_t parameter_count);

  void step(const TensorList& params, const ConstTensorList& grads);

  const AdamConfig& config() const { return config_; }
  int64_t steps_taken() const { return steps_; }
  size_t size() const { return first_.size(); }

 private:
  AdamConfig config_;
  std::vector<double> first_;
  std::vector<double> second_;
  int64_t steps_ = 0;
};

// -------------------------------------------------- generic param helpers

template <Parametric P>
size_t parameter_count(const P& p) {
  size_t n = 0;
  for (const auto& t : p.tensors()) n += t.size();
  return n;
}

template <Parametric P>
void set_zero(P& p) {
  for (auto t : p.tensors()) std::fill(t.begin(), t.end(), 0.0);
}

template <Parametric P>
P zeros_like(const P& p) {
  P out = p;
  set_zero(out);
  return out;
}

template <Parametric P>
std::vector<double> flatten(const P& p) {
  std::vector<double> out;
  out.reserve(parameter_count(p));
  for (const auto& t : p.tensors()) out.insert(out.end(), t.begin(), t.end());
  return out;
}

// Writes a flat vector back into `p`; sizes must agree.
template <Parametric P>
void assign_flat(P& p, std::span<const double> flat) {
  require_length(static_cast<Index>(flat.size()), static_cast<Index>(parameter_count(p)),
                 "flat parameter vector");
  size_t offset = 0;
  for (auto t : p.tensors()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.begin());
    offset += t.size();
  }
}

// Per-parameter gradient accumulators matched 1:1 to the tensors of a model.
template <Parametric P>
class GradientTape {
 public:
  explicit GradientTape(const P& like) : grads_(zeros_like(like)) {}

  P& grads() { return grads_; }
  const P& grads() const { return grads_; }
  void zero() { set_zero(grads_); }

 private:
  P grads_;
};

template <Parametric P>
void adam_step(Adam& opt, P& params, const P& grads) {
  opt.step(params.tensors(), grads.tensors());
}

}  // namespace fedgen::nn
