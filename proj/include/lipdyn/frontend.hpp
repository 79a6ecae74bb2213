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

#include <array>
#include <string>

#include "lipdyn/params.hpp"
#include "lipdyn/tensor.hpp"

namespace lipdyn {

/// Desk-scale frontend: a single 3D conv bank for local dynamics and a small
/// weight-shared per-frame 2D stack in place of a ResNet18 trunk.
struct FrontendConfig {
  std::size_t dyn_channels = 8;
  std::size_t visual_dim = 64;
  std::size_t frame_px = 16;                      // H == W of the input patches
  std::array<std::size_t, 3> dyn_kernel{3, 5, 5};  // t, h, w
  std::size_t visual_channels1 = 8;
  std::size_t visual_channels2 = 16;

  /// Throws ConfigError on even kernels or a frame size the stride-2 stack
  /// plus 2x2 pooling cannot reduce (must be a multiple of 8).
  void validate() const;
};

/// E_d parameters.
struct DynamicExtractor {
  Tensor kernel;  // [C_d,1,kt,kh,kw]
  Tensor bias;    // [C_d]
};

/// E_v parameters.
struct VisualExtractor {
  Tensor conv1;  // [C1,C_d,3,3], stride 2
  Tensor bias1;  // [C1]
  Tensor conv2;  // [C2,C1,3,3], stride 2
  Tensor bias2;  // [C2]
  Linear proj;   // C2*(H/8)^2 -> D_v
};

DynamicExtractor make_dynamic_extractor(const FrontendConfig& cfg, ModelParams& params, Rng& rng);
VisualExtractor make_visual_extractor(const FrontendConfig& cfg, ModelParams& params, Rng& rng);

/// frames[B,1,T,H,W] -> F_d[B,C_d,T,H,W]; T, H and W are preserved.
Tensor extract_dynamic(const Tensor& frames, const DynamicExtractor& ed);

/// F_d[B,C_d,T,H,W] -> F_v[B,T,D_v], same weights at every frame.
Tensor extract_visual(const Tensor& dyn, const VisualExtractor& ev);

}  // namespace lipdyn
