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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fedgen/errors.hpp"

namespace fedgen::ckpt {
namespace {

std::filesystem::path temp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

TEST(Checkpoint, Stage1RoundTripIsBitExact) {
  const auto a = bae::init_bae({20, {10, 8}, 4}, 1), b = bae::init_bae({20, {10, 8}, 4}, 2);
  const std::vector<bae::Decoder> decoders{a.decoder, b.decoder};
  const auto path = temp("fedgen_stage1.ckpt");
  write_checkpoint(path, stage1_checkpoint(3, a.encoder, decoders));
  const auto c = read_checkpoint(path);
  EXPECT_EQ(c.kind, "stage1");
  EXPECT_EQ(c.round, 3u);
  const auto enc = encoder_from(c);
  EXPECT_EQ(nn::flatten(enc), nn::flatten(a.encoder));
  ASSERT_EQ(enc.layers.size(), 3u);
  EXPECT_EQ(enc.layers.back().activation, a.encoder.layers.back().activation);
  const auto decs = decoders_from(c);
  ASSERT_EQ(decs.size(), 2u);
  EXPECT_EQ(nn::flatten(decs[1]), nn::flatten(b.decoder));
  EXPECT_EQ(decs[1].layers.back().activation, nn::Activation::kSigmoid);
  std::filesystem::remove(path);
}

TEST(Checkpoint, Stage2RoundTripIsBitExact) {
  const auto p = tcvae::init_tcvae({6, 3, 2, 5, 7}, 4);
  const auto path = temp("fedgen_stage2.ckpt");
  write_checkpoint(path, stage2_checkpoint(12, p));
  const auto q = tcvae_from(read_checkpoint(path));
  EXPECT_EQ(nn::flatten(q), nn::flatten(p));
  EXPECT_EQ(q.z_width(), 3);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto p = tcvae::init_tcvae({6, 3, 2, 5, 7}, 4);
  const auto path = temp("fedgen_corrupt.ckpt");
  write_checkpoint(path, stage2_checkpoint(0, p));
  const auto size = std::filesystem::file_size(path);

  std::filesystem::resize_file(path, size - 8);
  EXPECT_THROW(read_checkpoint(path), FormatError);

  write_checkpoint(path, stage2_checkpoint(0, p));
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(read_checkpoint(path), FormatError);

  write_checkpoint(path, stage2_checkpoint(0, p));
  {
    std::ofstream f(path, std::ios::app | std::ios::binary);
    f.write("extra", 5);
  }
  EXPECT_THROW(read_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(read_checkpoint(path), DataError);
}

TEST(Checkpoint, MissingTensorIsFormatError) {
  Checkpoint c;
  c.kind = "stage1";
  EXPECT_THROW(c.tensor("encoder.0.weights"), FormatError);
  EXPECT_THROW(encoder_from(c), FormatError);
}

}  // namespace
}  // namespace fedgen::ckpt
