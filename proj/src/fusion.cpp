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

#include "lipdyn/fusion.hpp"

#include "lipdyn/errors.hpp"
#include "lipdyn/ops.hpp"

namespace lipdyn {

namespace {

void require_same_bt(std::span<const Tensor> features, const char* what) {
  if (features.size() < 2) throw UsageError(std::string(what) + " needs at least two operands");
  const Shape& s0 = features[0].shape();
  if (s0.size() != 3) throw DimensionError(std::string(what) + " expects [B,T,D], got " + shape_str(s0));
  for (const auto& f : features) {
    const Shape& s = f.shape();
    if (s.size() != 3 || s[0] != s0[0] || s[1] != s0[1]) {
      throw DimensionError(std::string(what) + " operand shapes differ: " + shape_str(s0) + " vs " +
                           shape_str(s));
    }
  }
}

void require_same_shape(std::span<const Tensor> features, const char* what) {
  require_same_bt(features, what);
  for (const auto& f : features) {
    if (f.shape() != features[0].shape()) {
      throw DimensionError(std::string(what) + " operand shapes differ: " +
                           shape_str(features[0].shape()) + " vs " + shape_str(f.shape()));
    }
  }
}

}  // namespace

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kCat2:
      return "cat2";
    case FusionMode::kSum2:
      return "sum2";
    case FusionMode::kCat3:
      return "cat3";
    case FusionMode::kWsum3:
      return "wsum3";
    case FusionMode::kComposite:
      return "composite";
  }
  return "?";
}

FusionMode parse_fusion_mode(std::string_view name) {
  for (auto m : {FusionMode::kCat2, FusionMode::kSum2, FusionMode::kCat3, FusionMode::kWsum3,
                 FusionMode::kComposite}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown fusion mode '" + std::string(name) +
                    "' (expected cat2, sum2, cat3, wsum3 or composite)");
}

std::size_t fusion_operand_count(FusionMode mode) {
  return mode == FusionMode::kCat2 || mode == FusionMode::kSum2 ? 2 : 3;
}

void FusionSpec::validate() const {
  if (operands.size() != fusion_operand_count(mode)) {
    throw ConfigError("fusion mode " + std::string(to_string(mode)) + " takes " +
                      std::to_string(fusion_operand_count(mode)) + " graph features, got " +
                      std::to_string(operands.size()));
  }
  if (mode == FusionMode::kComposite &&
      operands != std::vector<GraphKind>{GraphKind::kLcg, GraphKind::kDag, GraphKind::kSag}) {
    throw ConfigError("composite fusion expects operands ordered lcg, dag, sag");
  }
  if (reduce_dim == 0) throw ConfigError("fusion reduce_dim must be positive");
}

FusionParams make_fusion(const FusionSpec& spec, ModelParams& params, Rng& rng) {
  spec.validate();
  const std::size_t d = spec.reduce_dim;
  FusionParams fp;
  switch (spec.mode) {
    case FusionMode::kSum2:
      break;
    case FusionMode::kCat2:
    case FusionMode::kComposite:
      fp.reduction = make_linear(params, "fusion.reduce", 2 * d, d, rng);
      break;
    case FusionMode::kCat3:
      fp.reduction = make_linear(params, "fusion.reduce", 3 * d, d, rng);
      break;
    case FusionMode::kWsum3:
      fp.router = Router{make_linear(params, "fusion.router.hidden", 3 * d, d, rng),
                         make_linear(params, "fusion.router.gate", d, 3, rng)};
      break;
  }
  return fp;
}

std::size_t fusion_param_count(FusionMode mode, std::size_t dim) {
  switch (mode) {
    case FusionMode::kSum2:
      return 0;
    case FusionMode::kCat2:
    case FusionMode::kComposite:
      return 2 * dim * dim + dim;
    case FusionMode::kCat3:
      return 3 * dim * dim + dim;
    case FusionMode::kWsum3:
      return (3 * dim * dim + dim) + (dim * 3 + 3);
  }
  return 0;
}

Tensor fuse_cat(std::span<const Tensor> features, const Linear& reduction) {
  require_same_bt(features, "fuse_cat");
  return linear(concat(features, -1), reduction);
}

Tensor fuse_sum(std::span<const Tensor> features) {
  require_same_shape(features, "fuse_sum");
  Tensor out = features[0];
  for (std::size_t i = 1; i < features.size(); ++i) out = add(out, features[i]);
  return out;
}

Tensor router_weights(std::span<const Tensor> features, const Router& router) {
  require_same_shape(features, "fuse_wsum");
  if (features.size() != 3) throw UsageError("fuse_wsum takes exactly three operands");
  const Tensor hidden = relu(linear(concat(features, -1), router.hidden));
  return softmax(linear(hidden, router.gate), -1);
}

Tensor fuse_wsum(std::span<const Tensor> features, const Router& router) {
  const Tensor w = router_weights(features, router);
  Tensor out;
  for (std::size_t k = 0; k < features.size(); ++k) {
    const Tensor term = mul(features[k], slice(w, -1, k, k + 1));
    out = k == 0 ? term : add(out, term);
  }
  return out;
}

Tensor fuse_composite(const Tensor& f_lcg, const Tensor& f_dag, const Tensor& f_sag,
                      const Linear& reduction) {
  const Tensor pair[] = {f_dag, f_sag};
  const Tensor reduced = fuse_cat(pair, reduction);
  const Tensor both[] = {f_lcg, reduced};
  return fuse_sum(both);
}

Tensor fuse(const FusionSpec& spec, const FusionParams& params, std::span<const Tensor> features) {
  if (features.size() != fusion_operand_count(spec.mode)) {
    throw UsageError("fusion received " + std::to_string(features.size()) + " features");
  }
  switch (spec.mode) {
    case FusionMode::kSum2:
      return fuse_sum(features);
    case FusionMode::kCat2:
    case FusionMode::kCat3:
      return fuse_cat(features, *params.reduction);
    case FusionMode::kWsum3:
      return fuse_wsum(features, *params.router);
    case FusionMode::kComposite:
      return fuse_composite(features[0], features[1], features[2], *params.reduction);
  }
  throw UsageError("unhandled fusion mode");
}

Tensor merge_with_visual(const Tensor& f_graph, const Tensor& f_v) {
  if (f_graph.shape() != f_v.shape()) {
    throw DimensionError("graph feature " + shape_str(f_graph.shape()) +
                         " does not match visual feature " + shape_str(f_v.shape()));
  }
  return add(f_graph, f_v);
}

}  // namespace lipdyn
