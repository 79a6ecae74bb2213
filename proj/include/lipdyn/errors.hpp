// Copyright (c) 2026 The lipdyn Authors. All Rights Reserved.
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

namespace lipdyn {

/// Base class of every error raised by the library. The CLI maps each
/// subclass to its own process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range input data, missing files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// API misuse (non-scalar loss, empty inputs, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or failed numeric verification.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Graph construction failures (open ring, coincident landmarks, zero rows).
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint does not match the architecture it is loaded into.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace lipdyn
