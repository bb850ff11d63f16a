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

#include "fedgen/permutation.hpp"

#include <numeric>
#include <string>

#include "fedgen/errors.hpp"

namespace fedgen::matchagg {

Permutation::Permutation(std::vector<int> mapping) : mapping_(std::move(mapping)) {
  std::vector<char> seen(mapping_.size(), 0);
  for (int dst : mapping_) {
    if (dst < 0 || static_cast<size_t>(dst) >= mapping_.size() || seen[static_cast<size_t>(dst)]) {
      throw InvalidArgument("Permutation: mapping is not a bijection on {0.." +
                            std::to_string(static_cast<long>(mapping_.size()) - 1) + "}");
    }
    seen[static_cast<size_t>(dst)] = 1;
  }
}

Permutation Permutation::identity(size_t size) {
  std::vector<int> m(size);
  std::iota(m.begin(), m.end(), 0);
  return Permutation(std::move(m));
}

bool Permutation::is_identity() const {
  for (size_t i = 0; i < mapping_.size(); ++i) {
    if (mapping_[i] != static_cast<int>(i)) return false;
  }
  return true;
}

Permutation Permutation::inverse() const {
  std::vector<int> inv(mapping_.size());
  for (size_t i = 0; i < mapping_.size(); ++i) inv[static_cast<size_t>(mapping_[i])] = static_cast<int>(i);
  return Permutation(std::move(inv));
}

Permutation Permutation::then(const Permutation& next) const {
  if (next.size() != size()) throw DimensionError("Permutation::then: sizes differ");
  std::vector<int> out(size());
  for (size_t i = 0; i < size(); ++i) out[i] = next[static_cast<size_t>(mapping_[i])];
  return Permutation(std::move(out));
}

nn::Matrix Permutation::permute_columns(const nn::Matrix& m) const {
  nn::require_length(m.cols(), static_cast<nn::Index>(size()), "permute_columns");
  nn::Matrix out(m.rows(), m.cols());
  for (size_t i = 0; i < size(); ++i) out.col(mapping_[i]) = m.col(static_cast<nn::Index>(i));
  return out;
}

nn::Matrix Permutation::permute_rows(const nn::Matrix& m) const {
  nn::require_length(m.rows(), static_cast<nn::Index>(size()), "permute_rows");
  nn::Matrix out(m.rows(), m.cols());
  for (size_t i = 0; i < size(); ++i) out.row(mapping_[i]) = m.row(static_cast<nn::Index>(i));
  return out;
}

nn::Vector Permutation::permute(const nn::Vector& v) const {
  nn::require_length(v.size(), static_cast<nn::Index>(size()), "permute");
  nn::Vector out(v.size());
  for (size_t i = 0; i < size(); ++i) out[mapping_[i]] = v[static_cast<nn::Index>(i)];
  return out;
}

}  // namespace fedgen::matchagg
