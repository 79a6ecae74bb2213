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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lipdyn/graphs.hpp"
#include "lipdyn/params.hpp"

namespace lipdyn {

/// The lip-dynamics fusion variants.
///   cat2 / cat3  concatenate then reduce with a learned linear map
///   sum2         point-wise addition, no parameters
///   wsum3        per-frame router weights, convex combination
///   composite    sum(f_lcg, cat(f_dag, f_sag))
enum class FusionMode { kCat2, kSum2, kCat3, kWsum3, kComposite };

std::string_view to_string(FusionMode mode);
/// Accepts the names above; throws ConfigError otherwise.
FusionMode parse_fusion_mode(std::string_view name);
std::size_t fusion_operand_count(FusionMode mode);

struct FusionSpec {
  FusionMode mode = FusionMode::kComposite;
  std::vector<GraphKind> operands;  // order the features are passed in
  std::size_t reduce_dim = 64;

  /// Throws ConfigError when the operand list does not fit the mode
  /// (composite requires exactly lcg, dag, sag in that order).
  void validate() const;
};

/// Per-frame router: hidden linear (3D -> D), ReLU, gate linear (D -> 3).
struct Router {
  Linear hidden;
  Linear gate;
};

struct FusionParams {
  std::optional<Linear> reduction;  // cat2, cat3, composite
  std::optional<Router> router;     // wsum3
};

FusionParams make_fusion(const FusionSpec& spec, ModelParams& params, Rng& rng);

/// Number of parameters the fusion stage adds for feature width D.
std::size_t fusion_param_count(FusionMode mode, std::size_t dim);

/// Concatenate along channels, then project back: sum(D_i) -> D.
Tensor fuse_cat(std::span<const Tensor> features, const Linear& reduction);
/// Element-wise sum of equally shaped features.
Tensor fuse_sum(std::span<const Tensor> features);
/// Softmax router weights [B,T,3] computed from the concatenated frame features.
Tensor router_weights(std::span<const Tensor> features, const Router& router);
/// sum_k w_k f_k with router weights.
Tensor fuse_wsum(std::span<const Tensor> features, const Router& router);
/// f_lcg + fuse_cat({f_dag, f_sag}).
Tensor fuse_composite(const Tensor& f_lcg, const Tensor& f_dag, const Tensor& f_sag,
                      const Linear& reduction);
/// Dispatches on spec.mode; features ordered as spec.operands.
Tensor fuse(const FusionSpec& spec, const FusionParams& params, std::span<const Tensor> features);

/// Final fusion level: graph feature + frame-wise visual feature.
Tensor merge_with_visual(const Tensor& f_graph, const Tensor& f_v);

}  // namespace lipdyn
