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

#pragma once

#include <vector>

#include "fedgen/nn.hpp"

namespace fedgen::matchagg {

// A bijection on {0..m-1}. Entry i is the destination index of source
// neuron i: applying it moves column (or row, or element) i to position
// mapping[i].
class Permutation {
 public:
  Permutation() = default;
  // Throws InvalidArgument unless `mapping` is a bijection.
  explicit Permutation(std::vector<int> mapping);

  static Permutation identity(size_t size);

  size_t size() const { return mapping_.size(); }
  int operator[](size_t i) const { return mapping_[i]; }
  const std::vector<int>& mapping() const { return mapping_; }
  bool is_identity() const;

  Permutation inverse() const;
  // Applies *this first, then `next`.
  Permutation then(const Permutation& next) const;

  nn::Matrix permute_columns(const nn::Matrix& m) const;
  nn::Matrix permute_rows(const nn::Matrix& m) const;
  nn::Vector permute(const nn::Vector& v) const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> mapping_;
};

}  // namespace fedgen::matchagg
