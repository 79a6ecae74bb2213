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
#include <vector>

#include "lipdyn/params.hpp"

namespace lipdyn {

struct AdamWConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

/// Moment buffers in the parameter order of the owning ModelParams.
struct OptimState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// Adam with decoupled weight decay: each step first scales parameters by
/// (1 - lr * weight_decay), then applies the bias-corrected Adam update.
/// A parameter without a gradient buffer is treated as having zero gradient.
class AdamW {
 public:
  AdamW(ModelParams& params, AdamWConfig cfg);

  void step();
  void zero_grad() { params_.zero_grad(); }

  const AdamWConfig& config() const { return cfg_; }
  const OptimState& state() const { return state_; }
  /// Throws LoadError if the buffers do not match the parameter shapes.
  void load_state(OptimState state);

 private:
  ModelParams& params_;
  AdamWConfig cfg_;
  OptimState state_;
};

}  // namespace lipdyn
