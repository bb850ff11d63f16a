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

#include "fedgen/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "fedgen/errors.hpp"

namespace fedgen::ckpt {

namespace {

using nlohmann::json;

void add(Checkpoint& c, const std::string& name, nn::Matrix m) { c.tensors.emplace_back(name, std::move(m)); }

void add_dense(Checkpoint& c, const std::string& prefix, const nn::DenseLayer& layer) {
  add(c, prefix + ".weights", layer.weights);
  add(c, prefix + ".bias", nn::Matrix(layer.bias.transpose()));
  c.activations.emplace_back(prefix, nn::to_string(layer.activation));
}

nn::DenseLayer dense_from(const Checkpoint& c, const std::string& prefix) {
  nn::DenseLayer layer;
  layer.weights = c.tensor(prefix + ".weights");
  const nn::Matrix& b = c.tensor(prefix + ".bias");
  if (b.rows() != 1 || b.cols() != layer.weights.cols()) {
    throw FormatError("checkpoint: " + prefix + ".bias has shape " + shape_string(b.rows(), b.cols()));
  }
  layer.bias = b.row(0).transpose();
  layer.activation = nn::activation_from_string(c.activation(prefix));
  return layer;
}

std::vector<nn::DenseLayer> layers_from(const Checkpoint& c, const std::string& prefix) {
  std::vector<nn::DenseLayer> out;
  for (size_t l = 0; c.has(prefix + "." + std::to_string(l) + ".weights"); ++l) {
    out.push_back(dense_from(c, prefix + "." + std::to_string(l)));
  }
  if (out.empty()) throw FormatError("checkpoint: no layers under '" + prefix + "'");
  return out;
}

void add_layers(Checkpoint& c, const std::string& prefix, const std::vector<nn::DenseLayer>& layers) {
  for (size_t l = 0; l < layers.size(); ++l) add_dense(c, prefix + "." + std::to_string(l), layers[l]);
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

const nn::Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw FormatError("checkpoint: missing tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.first == name) return true;
  }
  return false;
}

std::string Checkpoint::activation(const std::string& prefix) const {
  for (const auto& [p, a] : activations) {
    if (p == prefix) return a;
  }
  throw FormatError("checkpoint: missing activation for '" + prefix + "'");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json manifest;
  manifest["kind"] = ckpt.kind;
  manifest["round"] = ckpt.round;
  manifest["tensors"] = json::array();
  for (const auto& [name, m] : ckpt.tensors) {
    manifest["tensors"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  manifest["activations"] = json::object();
  for (const auto& [prefix, act] : ckpt.activations) manifest["activations"][prefix] = act;
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put<uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.tensors) {
    os.write(reinterpret_cast<const char*>(t.second.data()), static_cast<std::streamsize>(t.second.size() * sizeof(double)));
  }
  if (!os) throw DataError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  const std::string where = path.string();
  char magic[8];
  uint64_t length = 0;
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError(where + ": not a checkpoint (bad magic)");
  }
  if (!is.read(reinterpret_cast<char*>(&length), sizeof length) || length > (uint64_t{1} << 30)) {
    throw FormatError(where + ": bad manifest length");
  }
  std::string text(length, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(length))) throw FormatError(where + ": truncated manifest");

  Checkpoint c;
  try {
    const json manifest = json::parse(text);
    c.kind = manifest.at("kind").get<std::string>();
    c.round = manifest.at("round").get<size_t>();
    for (const auto& t : manifest.at("tensors")) {
      const auto rows = t.at("rows").get<nn::Index>(), cols = t.at("cols").get<nn::Index>();
      if (rows < 0 || cols < 0 || rows * cols > (nn::Index{1} << 28)) throw FormatError(where + ": bad tensor shape");
      c.tensors.emplace_back(t.at("name").get<std::string>(), nn::Matrix(rows, cols));
    }
    for (const auto& [prefix, act] : manifest.at("activations").items()) {
      c.activations.emplace_back(prefix, act.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": malformed manifest (" + e.what() + ")");
  }
  for (auto& t : c.tensors) {
    if (!is.read(reinterpret_cast<char*>(t.second.data()), static_cast<std::streamsize>(t.second.size() * sizeof(double)))) {
      throw FormatError(where + ": truncated payload at tensor '" + t.first + "'");
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(where + ": trailing bytes after payload");
  return c;
}

Checkpoint stage1_checkpoint(size_t round, const bae::Encoder& encoder, std::span<const bae::Decoder> decoders) {
  Checkpoint c;
  c.kind = "stage1";
  c.round = round;
  add_layers(c, "encoder", encoder.layers);
  for (size_t k = 0; k < decoders.size(); ++k) add_layers(c, "decoder" + std::to_string(k), decoders[k].layers);
  return c;
}

Checkpoint stage2_checkpoint(size_t round, const tcvae::TcvaeParams& params) {
  Checkpoint c;
  c.kind = "stage2";
  c.round = round;
  for (size_t i = 0; i < params.backbone.cells.size(); ++i) {
    const auto& cell = params.backbone.cells[i];
    const std::string p = "backbone." + std::to_string(i);
    add(c, p + ".w_input", cell.w_input);
    add(c, p + ".w_hidden", cell.w_hidden);
    add(c, p + ".bias", nn::Matrix(cell.bias.transpose()));
  }
  add_layers(c, "posterior", params.posterior.layers);
  add_layers(c, "prior", params.prior.layers);
  add_layers(c, "likelihood", params.likelihood.layers);
  return c;
}

bae::Encoder encoder_from(const Checkpoint& ckpt) { return {layers_from(ckpt, "encoder")}; }

std::vector<bae::Decoder> decoders_from(const Checkpoint& ckpt) {
  std::vector<bae::Decoder> out;
  for (size_t k = 0; ckpt.has("decoder" + std::to_string(k) + ".0.weights"); ++k) {
    out.push_back({layers_from(ckpt, "decoder" + std::to_string(k))});
  }
  return out;
}

tcvae::TcvaeParams tcvae_from(const Checkpoint& ckpt) {
  tcvae::TcvaeParams p;
  for (size_t i = 0; i < p.backbone.cells.size(); ++i) {
    auto& cell = p.backbone.cells[i];
    const std::string pre = "backbone." + std::to_string(i);
    cell.w_input = ckpt.tensor(pre + ".w_input");
    cell.w_hidden = ckpt.tensor(pre + ".w_hidden");
    cell.bias = ckpt.tensor(pre + ".bias").row(0).transpose();
  }
  p.posterior.layers = layers_from(ckpt, "posterior");
  p.prior.layers = layers_from(ckpt, "prior");
  p.likelihood.layers = layers_from(ckpt, "likelihood");
  tcvae::validate(p);
  return p;
}

}  // namespace fedgen::ckpt
