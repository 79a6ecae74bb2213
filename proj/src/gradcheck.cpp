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

#include "lipdyn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lipdyn/errors.hpp"

namespace lipdyn {

namespace {

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

double eval_scalar(const std::function<Tensor()>& fn) {
  NoGradGuard guard;
  const Tensor y = fn();
  if (y.numel() != 1) throw UsageError("gradcheck requires a scalar function");
  return y.item();
}

}  // namespace

double gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor leaf = x.clone();
  leaf.set_requires_grad(true);
  return gradcheck_params([&] { return f(leaf); }, {{"x", leaf}}, h).max_rel_error;
}

GradcheckReport gradcheck_params(const std::function<Tensor()>& loss_fn,
                                 std::vector<std::pair<std::string, Tensor>> params, double h,
                                 std::size_t max_entries_per_param, std::uint64_t seed) {
  for (auto& [name, p] : params) p.zero_grad();
  const Tensor loss = loss_fn();
  if (loss.numel() != 1) {
    throw UsageError("gradcheck requires a scalar function, got shape " + shape_str(loss.shape()));
  }
  backward(loss);

  GradcheckReport report;
  std::mt19937_64 rng(seed);
  for (auto& [name, p] : params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    std::vector<std::size_t> idx(p.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_entries_per_param != 0 && idx.size() > max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries_per_param);
    }
    auto values = p.mutable_data();
    for (const std::size_t i : idx) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = eval_scalar(loss_fn);
      values[i] = orig - h;
      const double down = eval_scalar(loss_fn);
      values[i] = orig;
      const double err = rel_error(analytic[i], (up - down) / (2.0 * h));
      ++report.entries_checked;
      if (err > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = err;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace lipdyn
