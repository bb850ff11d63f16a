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

// Parameter checkpoints: a JSON manifest naming every tensor and its shape,
// followed by the tensors as little-endian fp64.
//
// Layout:
//   8 bytes   magic "FGCKPT01"
//   u64       manifest length in bytes
//   manifest  UTF-8 JSON {"kind", "round", "tensors": [{"name", "rows",
//             "cols"}...], "activations": {prefix: name}}
//   payload   row-major doubles, tensors in manifest order

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedgen/bae.hpp"
#include "fedgen/tcvae.hpp"

namespace fedgen::ckpt {

inline constexpr char kCheckpointMagic[8] = {'F', 'G', 'C', 'K', 'P', 'T', '0', '1'};

struct Checkpoint {
  std::string kind;
  size_t round = 0;
  std::vector<std::pair<std::string, nn::Matrix>> tensors;
  std::vector<std::pair<std::string, std::string>> activations;

  // Throws FormatError when absent.
  const nn::Matrix& tensor(const std::string& name) const;
  std::string activation(const std::string& prefix) const;
  bool has(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws FormatError for a bad magic, manifest or truncated payload.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Global encoder plus one decoder per hospital (in global latent order).
Checkpoint stage1_checkpoint(size_t round, const bae::Encoder& encoder, std::span<const bae::Decoder> decoders);
Checkpoint stage2_checkpoint(size_t round, const tcvae::TcvaeParams& params);

bae::Encoder encoder_from(const Checkpoint& ckpt);
std::vector<bae::Decoder> decoders_from(const Checkpoint& ckpt);
tcvae::TcvaeParams tcvae_from(const Checkpoint& ckpt);

}  // namespace fedgen::ckpt
