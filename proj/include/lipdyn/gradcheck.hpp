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
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lipdyn/tensor.hpp"

namespace lipdyn {

/// Max over entries of |analytic - numeric| / max(1, |analytic|, |numeric|),
/// where numeric is the central difference with step h. f must be scalar.
double gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

/// Checks d loss / d param for a list of named leaves that the closure reads.
/// When max_entries_per_param is nonzero only that many randomly chosen
/// entries of each parameter are probed (seeded, reproducible).
GradcheckReport gradcheck_params(const std::function<Tensor()>& loss_fn,
                                 std::vector<std::pair<std::string, Tensor>> params, double h = 1e-5,
                                 std::size_t max_entries_per_param = 0, std::uint64_t seed = 0);

}  // namespace lipdyn
