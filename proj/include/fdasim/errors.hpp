// Copyright 2026 The fdasim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace fdasim {

// Base class for every error raised by the library. The CLI maps the
// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-conformable vectors, mismatched dataset/model dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied configuration (out-of-range betas, lr <= 0, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Statistical estimation impossible with the given inputs (e.g. B < 2).
class EstimationError : public Error {
 public:
  using Error::Error;
};

// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace fdasim
