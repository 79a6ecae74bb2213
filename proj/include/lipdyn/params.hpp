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

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lipdyn/tensor.hpp"

namespace lipdyn {

using Rng = std::mt19937_64;

/// Named, ordered collection of every learnable tensor of a model.
class ModelParams {
 public:
  /// Registers a leaf; the tensor is marked requires_grad. Names are unique.
  Tensor add(std::string name, Tensor value);
  /// Registers a tensor drawn from U(-bound, bound).
  Tensor add_uniform(std::string name, Shape shape, double bound, Rng& rng);

  Tensor get(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::string> names() const;

  /// Total scalar count, optionally restricted to names starting with prefix.
  std::size_t count(std::string_view prefix = {}) const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// y = x W + b over the last axis; weight [in,out], bias [out].
struct Linear {
  Tensor weight;
  Tensor bias;

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

/// Uniform bound scale that keeps activation variance through a ReLU.
inline constexpr double kReluGain = 2.449489742783178;  // sqrt(6)

/// Registers `<prefix>.weight` with U(+-gain/sqrt(in)) and `<prefix>.bias`
/// with U(+-1/sqrt(in)).
Linear make_linear(ModelParams& params, const std::string& prefix, std::size_t in, std::size_t out,
                   Rng& rng, double gain = 1.0);

/// Applies a Linear to x[..., in].
Tensor linear(const Tensor& x, const Linear& layer);

}  // namespace lipdyn
