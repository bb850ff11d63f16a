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

#include <stdexcept>
#include <string>

namespace fedgen {

// Base of every error thrown by the core library. The C API maps the
// concrete subclass onto a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented domain (negative variance, non-bijective
// permutation, empty data, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk record.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Bad or unknown configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data unusable for the requested operation.
class DataError : public Error {
 public:
  using Error::Error;
};

std::string shape_string(long rows, long cols);

}  // namespace fedgen
