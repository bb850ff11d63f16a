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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedgen/errors.hpp"

namespace fedgen {

std::string shape_string(long rows, long cols) {
  std::ostringstream os;
  os << "(" << rows << "x" << cols << ")";
  return os.str();
}

}  // namespace fedgen

namespace fedgen::nn {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a.rows(), a.cols()) +
                         " does not match " + shape_string(b.rows(), b.cols()));
  }
}

void require_length(Index got, Index want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(got) +
                         " does not match expected " + std::to_string(want));
  }
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw InvalidArgument("unknown activation '" + s + "'");
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void activate(Activation a, Matrix& m) {
  switch (a) {
    case Activation::kIdentity: return;
    case Activation::kSigmoid: m = m.unaryExpr([](double x) { return sigmoid(x); }); return;
    case Activation::kTanh: m = m.array().tanh().matrix(); return;
    case Activation::kRelu: m = m.cwiseMax(0.0); return;
  }
}

void activation_backward(Activation a, const Matrix& output, Matrix& grad) {
  switch (a) {
    case Activation::kIdentity: return;
    case Activation::kSigmoid:
      grad.array() *= output.array() * (1.0 - output.array());
      return;
    case Activation::kTanh:
      grad.array() *= 1.0 - output.array().square();
      return;
    case Activation::kRelu:
      grad.array() *= (output.array() > 0.0).cast<double>();
      return;
  }
}

// ---------------------------------------------------------------- dense

DenseLayer::DenseLayer(Index in_width, Index out_width, Activation act)
    : weights(Matrix::Zero(in_width, out_width)), bias(Vector::Zero(out_width)), activation(act) {}

TensorList DenseLayer::tensors() { return {view(weights), view(bias)}; }
ConstTensorList DenseLayer::tensors() const { return {view(weights), view(bias)}; }

void init_uniform(DenseLayer& layer, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(1, layer.in_width())));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = u(rng);
  for (Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = u(rng);
}

Vector dense_forward(const DenseLayer& layer, const Vector& input) {
  if (input.size() != layer.in_width()) {
    throw DimensionError("dense_forward: input " + shape_string(1, input.size()) +
                         " incompatible with weights " +
                         shape_string(layer.weights.rows(), layer.weights.cols()));
  }
  Matrix row = input.transpose();
  return dense_forward(layer, row).row(0).transpose();
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& input, DenseCache* cache) {
  if (input.cols() != layer.in_width()) {
    throw DimensionError("dense_forward: input " + shape_string(input.rows(), input.cols()) +
                         " incompatible with weights " +
                         shape_string(layer.weights.rows(), layer.weights.cols()));
  }
  Matrix out = input * layer.weights;
  out.rowwise() += layer.bias.transpose();
  activate(layer.activation, out);
  if (cache != nullptr) {
    cache->input = input;
    cache->output = out;
  }
  return out;
}

Matrix dense_backward_preact(const DenseLayer& layer, const Matrix& input,
                             const Matrix& grad_preact, DenseLayer& grads, bool want_input_grad) {
  if (grad_preact.cols() != layer.out_width() || grad_preact.rows() != input.rows()) {
    throw DimensionError("dense_backward: gradient " +
                         shape_string(grad_preact.rows(), grad_preact.cols()) +
                         " incompatible with batch " + shape_string(input.rows(), input.cols()));
  }
  grads.weights.noalias() += input.transpose() * grad_preact;
  grads.bias += grad_preact.colwise().sum().transpose();
  if (!want_input_grad) return {};
  return grad_preact * layer.weights.transpose();
}

Matrix dense_backward(const DenseLayer& layer, const DenseCache& cache, Matrix grad_output,
                      DenseLayer& grads, bool want_input_grad) {
  require_same_shape(grad_output, cache.output, "dense_backward");
  activation_backward(layer.activation, cache.output, grad_output);
  return dense_backward_preact(layer, cache.input, grad_output, grads, want_input_grad);
}

Matrix SparseRows::dense(std::span<const int64_t> rows) const {
  Matrix out = Matrix::Zero(static_cast<Index>(rows.size()), width);
  for (size_t r = 0; r < rows.size(); ++r) {
    const int64_t src = rows[r];
    for (int64_t p = offsets[src]; p < offsets[src + 1]; ++p) out(static_cast<Index>(r), indices[p]) = 1.0;
  }
  return out;
}

Matrix dense_forward_sparse(const DenseLayer& layer, const SparseRows& data,
                            std::span<const int64_t> rows, Matrix* output_cache) {
  if (data.width != layer.in_width()) {
    throw DimensionError("dense_forward_sparse: input width " + std::to_string(data.width) +
                         " incompatible with weights " +
                         shape_string(layer.weights.rows(), layer.weights.cols()));
  }
  Matrix out(static_cast<Index>(rows.size()), layer.out_width());
  for (size_t r = 0; r < rows.size(); ++r) {
    auto dst = out.row(static_cast<Index>(r));
    dst = layer.bias.transpose();
    const int64_t src = rows[r];
    for (int64_t p = data.offsets[src]; p < data.offsets[src + 1]; ++p) {
      dst += layer.weights.row(data.indices[p]);
    }
  }
  activate(layer.activation, out);
  if (output_cache != nullptr) *output_cache = out;
  return out;
}

void dense_backward_sparse(const SparseRows& data, std::span<const int64_t> rows,
                           const Matrix& grad_preact, DenseLayer& grads) {
  if (grad_preact.rows() != static_cast<Index>(rows.size()) ||
      grad_preact.cols() != grads.out_width()) {
    throw DimensionError("dense_backward_sparse: gradient " +
                         shape_string(grad_preact.rows(), grad_preact.cols()) +
                         " incompatible with batch of " + std::to_string(rows.size()));
  }
  for (size_t r = 0; r < rows.size(); ++r) {
    const int64_t src = rows[r];
    const auto g = grad_preact.row(static_cast<Index>(r));
    for (int64_t p = data.offsets[src]; p < data.offsets[src + 1]; ++p) {
      grads.weights.row(data.indices[p]) += g;
    }
  }
  grads.bias += grad_preact.colwise().sum().transpose();
}

// ------------------------------------------------------------------ LSTM

LstmBackbone::LstmBackbone(Index input_width, Index hidden_width) {
  Index in = input_width;
  for (auto& cell : cells) {
    cell.w_input = Matrix::Zero(in, 4 * hidden_width);
    cell.w_hidden = Matrix::Zero(hidden_width, 4 * hidden_width);
    cell.bias = Vector::Zero(4 * hidden_width);
    in = hidden_width;
  }
}

TensorList LstmBackbone::tensors() {
  TensorList out;
  for (auto& c : cells) {
    out.push_back(view(c.w_input));
    out.push_back(view(c.w_hidden));
    out.push_back(view(c.bias));
  }
  return out;
}

ConstTensorList LstmBackbone::tensors() const {
  ConstTensorList out;
  for (const auto& c : cells) {
    out.push_back(view(c.w_input));
    out.push_back(view(c.w_hidden));
    out.push_back(view(c.bias));
  }
  return out;
}

void init_lstm(LstmBackbone& backbone, Rng& rng) {
  for (auto& c : backbone.cells) {
    const Index h = c.hidden_width();
    const double bound = 1.0 / std::sqrt(static_cast<double>(c.in_width() + h));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = 0; i < c.w_input.size(); ++i) c.w_input.data()[i] = u(rng);
    for (Index i = 0; i < c.w_hidden.size(); ++i) c.w_hidden.data()[i] = u(rng);
    for (Index i = 0; i < c.bias.size(); ++i) c.bias[i] = u(rng);
    c.bias.segment(h, h).array() += 1.0;
  }
}

LstmState LstmState::zeros(Index batch, Index hidden_width) {
  LstmState s;
  for (int l = 0; l < 2; ++l) {
    s.hidden[l] = Matrix::Zero(batch, hidden_width);
    s.memory[l] = Matrix::Zero(batch, hidden_width);
  }
  return s;
}

LstmStateGrad LstmStateGrad::zeros(Index batch, Index hidden_width) {
  LstmStateGrad g;
  for (int l = 0; l < 2; ++l) {
    g.hidden[l] = Matrix::Zero(batch, hidden_width);
    g.memory[l] = Matrix::Zero(batch, hidden_width);
  }
  return g;
}

namespace {

Matrix sigmoid_of(const Matrix& m) { return m.unaryExpr([](double x) { return sigmoid(x); }); }

}  // namespace

LstmState lstm_step(const LstmBackbone& backbone, const LstmState& state, const Matrix& input,
                    Matrix& output, LstmStepCache* cache) {
  const Index h = backbone.hidden_width();
  if (h == 0 || backbone.cells[0].w_input.size() == 0) {
    throw InvalidArgument("lstm_step: backbone is not initialized");
  }
  if (input.cols() != backbone.input_width()) {
    throw DimensionError("lstm_step: input " + shape_string(input.rows(), input.cols()) +
                         " incompatible with input width " +
                         std::to_string(backbone.input_width()));
  }
  const Index batch = input.rows();
  for (int l = 0; l < 2; ++l) {
    if (state.hidden[l].rows() != batch || state.hidden[l].cols() != h ||
        state.memory[l].rows() != batch || state.memory[l].cols() != h) {
      throw InvalidArgument("lstm_step: state is uninitialized or has shape " +
                            shape_string(state.hidden[l].rows(), state.hidden[l].cols()) +
                            ", expected " + shape_string(batch, h));
    }
  }

  LstmState next;
  const Matrix* x = &input;
  for (int l = 0; l < 2; ++l) {
    const LstmCell& cell = backbone.cells[l];
    Matrix pre = (*x) * cell.w_input;
    pre.noalias() += state.hidden[l] * cell.w_hidden;
    pre.rowwise() += cell.bias.transpose();

    Matrix gi = sigmoid_of(pre.middleCols(0, h));
    Matrix gf = sigmoid_of(pre.middleCols(h, h));
    Matrix gg = pre.middleCols(2 * h, h).array().tanh().matrix();
    Matrix go = sigmoid_of(pre.middleCols(3 * h, h));

    next.memory[l] = gf.cwiseProduct(state.memory[l]) + gi.cwiseProduct(gg);
    Matrix mt = next.memory[l].array().tanh().matrix();
    next.hidden[l] = go.cwiseProduct(mt);

    if (cache != nullptr) {
      LstmCellCache& cc = cache->cells[l];
      cc.input = *x;
      cc.hidden_prev = state.hidden[l];
      cc.memory_prev = state.memory[l];
      cc.gate_i = std::move(gi);
      cc.gate_f = std::move(gf);
      cc.gate_g = std::move(gg);
      cc.gate_o = std::move(go);
      cc.memory = next.memory[l];
      cc.memory_tanh = std::move(mt);
    }
    x = &next.hidden[l];
  }
  output = next.hidden[1];
  return next;
}

LstmStateGrad lstm_step_backward(const LstmBackbone& backbone, const LstmStepCache& cache,
                                 const Matrix& grad_output, const LstmStateGrad& grad_next,
                                 LstmBackbone& grads, Matrix* grad_input) {
  const Index h = backbone.hidden_width();
  const Index batch = grad_output.rows();
  LstmStateGrad prev;
  Matrix dh_from_above = grad_output;  // gradient into the top cell's hidden output

  for (int l = 1; l >= 0; --l) {
    const LstmCell& cell = backbone.cells[l];
    const LstmCellCache& cc = cache.cells[l];
    LstmCell& g = grads.cells[l];

    Matrix dh = dh_from_above + grad_next.hidden[l];
    Matrix dc = grad_next.memory[l] +
                dh.cwiseProduct(cc.gate_o)
                    .cwiseProduct((1.0 - cc.memory_tanh.array().square()).matrix());

    Matrix dpre(batch, 4 * h);
    dpre.middleCols(0, h) = dc.cwiseProduct(cc.gate_g)
                                .cwiseProduct((cc.gate_i.array() * (1.0 - cc.gate_i.array())).matrix());
    dpre.middleCols(h, h) = dc.cwiseProduct(cc.memory_prev)
                                .cwiseProduct((cc.gate_f.array() * (1.0 - cc.gate_f.array())).matrix());
    dpre.middleCols(2 * h, h) =
        dc.cwiseProduct(cc.gate_i).cwiseProduct((1.0 - cc.gate_g.array().square()).matrix());
    dpre.middleCols(3 * h, h) = dh.cwiseProduct(cc.memory_tanh)
                                    .cwiseProduct((cc.gate_o.array() * (1.0 - cc.gate_o.array())).matrix());

    g.w_input.noalias() += cc.input.transpose() * dpre;
    g.w_hidden.noalias() += cc.hidden_prev.transpose() * dpre;
    g.bias += dpre.colwise().sum().transpose();

    prev.hidden[l] = dpre * cell.w_hidden.transpose();
    prev.memory[l] = dc.cwiseProduct(cc.gate_f);

    if (l == 1) {
      dh_from_above = dpre * cell.w_input.transpose();
    } else if (grad_input != nullptr) {
      *grad_input = dpre * cell.w_input.transpose();
    }
  }
  return prev;
}

// ---------------------------------------------------------------- losses

double bce_loss(const Vector& target, const Vector& prob) {
  require_length(prob.size(), target.size(), "bce_loss");
  if (target.size() == 0) return 0.0;
  double sum = 0.0;
  for (Index i = 0; i < target.size(); ++i) {
    const double p = std::clamp(prob[i], kProbClamp, 1.0 - kProbClamp);
    sum -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(target.size());
}

double bce_loss_batch(const Matrix& target, const Matrix& prob, Matrix* grad_logits) {
  require_same_shape(prob, target, "bce_loss_batch");
  const Index d = target.cols();
  if (d == 0) return 0.0;
  const double inv_d = 1.0 / static_cast<double>(d);
  if (grad_logits != nullptr) grad_logits->resize(target.rows(), d);
  double total = 0.0;
  for (Index r = 0; r < target.rows(); ++r) {
    double row = 0.0;
    for (Index c = 0; c < d; ++c) {
      const double raw = prob(r, c);
      const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
      const double x = target(r, c);
      row -= x * std::log(p) + (1.0 - x) * std::log(1.0 - p);
      if (grad_logits != nullptr) {
        const bool clamped = raw < kProbClamp || raw > 1.0 - kProbClamp;
        (*grad_logits)(r, c) = clamped ? 0.0 : (p - x) * inv_d;
      }
    }
    total += row * inv_d;
  }
  return total;
}

double gaussian_kl(const Vector& mu_q, const Vector& var_q, const Vector& mu_p,
                   const Vector& var_p) {
  require_length(var_q.size(), mu_q.size(), "gaussian_kl var_q");
  require_length(mu_p.size(), mu_q.size(), "gaussian_kl mu_p");
  require_length(var_p.size(), mu_q.size(), "gaussian_kl var_p");
  double kl = 0.0;
  for (Index i = 0; i < mu_q.size(); ++i) {
    if (!(var_q[i] > 0.0) || !(var_p[i] > 0.0)) {
      throw InvalidArgument("gaussian_kl: variances must be strictly positive");
    }
    const double diff = mu_q[i] - mu_p[i];
    kl += 0.5 * (std::log(var_p[i] / var_q[i]) + (var_q[i] + diff * diff) / var_p[i] - 1.0);
  }
  return kl;
}

Vector reparameterize(const Vector& mu, const Vector& sigma, const Vector& noise) {
  require_length(sigma.size(), mu.size(), "reparameterize sigma");
  require_length(noise.size(), mu.size(), "reparameterize noise");
  return mu + sigma.cwiseProduct(noise);
}

// ------------------------------------------------------------- optimizer

Adam::Adam(AdamConfig config, size_t parameter_count)
    : config_(config), first_(parameter_count, 0.0), second_(parameter_count, 0.0) {}

void Adam::step(const TensorList& params, const ConstTensorList& grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("Adam::step: " + std::to_string(params.size()) + " tensors vs " +
                         std::to_string(grads.size()) + " gradients");
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  size_t offset = 0;
  for (size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    auto g = grads[t];
    require_length(static_cast<Index>(g.size()), static_cast<Index>(p.size()), "Adam::step tensor");
    if (offset + p.size() > first_.size()) {
      throw DimensionError("Adam::step: optimizer sized for " + std::to_string(first_.size()) +
                           " parameters");
    }
    for (size_t i = 0; i < p.size(); ++i) {
      double& m = first_[offset + i];
      double& v = second_[offset + i];
      m = b1 * m + (1.0 - b1) * g[i];
      v = b2 * v + (1.0 - b2) * g[i] * g[i];
      p[i] -= lr * (m / c1) / (std::sqrt(v / c2) + config_.epsilon);
    }
    offset += p.size();
  }
  if (offset != first_.size()) {
    throw DimensionError("Adam::step: got " + std::to_string(offset) + " parameters, expected " +
                         std::to_string(first_.size()));
  }
}

}  // namespace fedgen::nn
