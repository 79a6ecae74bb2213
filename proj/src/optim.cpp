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

#include "lipdyn/optim.hpp"

#include <cmath>
#include <string>

#include "lipdyn/errors.hpp"

namespace lipdyn {

void AdamWConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("optimizer lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("optimizer eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer weight_decay must be >= 0");
}

AdamW::AdamW(ModelParams& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
  cfg_.validate();
  for (const auto& [name, t] : params_.entries()) {
    state_.m.emplace_back(t.numel(), 0.0);
    state_.v.emplace_back(t.numel(), 0.0);
  }
}

void AdamW::step() {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  const double shrink = 1.0 - cfg_.lr * cfg_.weight_decay;
  const auto& entries = params_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor p = entries[i].second;
    auto w = p.mutable_data();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    const bool has_grad = p.has_grad();
    const auto g = has_grad ? p.grad() : std::span<const double>();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has_grad ? g[k] : 0.0;
      if (cfg_.weight_decay != 0.0) w[k] *= shrink;
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void AdamW::load_state(OptimState state) {
  const auto& entries = params_.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw LoadError("optimizer state holds " + std::to_string(state.m.size()) + " buffers for " +
                    std::to_string(entries.size()) + " parameters");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (state.m[i].size() != entries[i].second.numel() || state.v[i].size() != entries[i].second.numel()) {
      throw LoadError("optimizer state for '" + entries[i].first + "' has the wrong size");
    }
  }
  state_ = std::move(state);
}

}  // namespace lipdyn
