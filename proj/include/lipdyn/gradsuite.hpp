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
#include <vector>

namespace lipdyn {

struct GradcheckCase {
  std::string name;
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  bool passed = false;
};

/// Names of the checks run by run_gradcheck_suite, one per differentiable
/// operation plus the full fused model.
std::vector<std::string> gradcheck_suite_names();

/// Runs every check for seeds base_seed .. base_seed + seeds - 1 against
/// central differences. `on_case` sees each result as it completes.
std::vector<GradcheckCase> run_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed = 0,
                                               double tolerance = 1e-4,
                                               const std::function<void(const GradcheckCase&)>& on_case = {});

}  // namespace lipdyn
