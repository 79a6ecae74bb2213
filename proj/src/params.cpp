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

#include "lipdyn/params.hpp"

#include <cmath>

#include "lipdyn/errors.hpp"
#include "lipdyn/ops.hpp"

namespace lipdyn {

Tensor ModelParams::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw UsageError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), value);
  return value;
}

Tensor ModelParams::add_uniform(std::string name, Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return add(std::move(name), Tensor(std::move(shape), std::move(v)));
}

Tensor ModelParams::get(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].second;
}

bool ModelParams::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::size_t ModelParams::count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) {
    if (std::string_view(name).starts_with(prefix)) n += t.numel();
  }
  return n;
}

void ModelParams::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

Linear make_linear(ModelParams& params, const std::string& prefix, std::size_t in, std::size_t out,
                   Rng& rng, double gain) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = params.add_uniform(prefix + ".weight", {in, out}, gain * bound, rng);
  l.bias = params.add_uniform(prefix + ".bias", {out}, bound, rng);
  return l;
}

Tensor linear(const Tensor& x, const Linear& layer) {
  const std::size_t in = layer.in_features();
  if (x.dim(-1) != in) {
    throw DimensionError("linear expects last dim " + std::to_string(in) + ", got " +
                         shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = layer.out_features();
  const Tensor flat = reshape(x, {x.numel() / in, in});
  return reshape(add(matmul(flat, layer.weight), layer.bias), std::move(out_shape));
}

}  // namespace lipdyn
