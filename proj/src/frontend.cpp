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

#include "lipdyn/frontend.hpp"

#include <cmath>

#include "lipdyn/errors.hpp"
#include "lipdyn/ops.hpp"

namespace lipdyn {

void FrontendConfig::validate() const {
  for (auto k : dyn_kernel) {
    if (k % 2 == 0) throw ConfigError("frontend 3D kernel extents must be odd");
  }
  if (frame_px == 0 || frame_px % 8 != 0) {
    throw ConfigError("frame size must be a positive multiple of 8, got " + std::to_string(frame_px));
  }
  if (dyn_channels == 0 || visual_dim == 0 || visual_channels1 == 0 || visual_channels2 == 0) {
    throw ConfigError("frontend channel counts must be positive");
  }
}

DynamicExtractor make_dynamic_extractor(const FrontendConfig& cfg, ModelParams& params, Rng& rng) {
  cfg.validate();
  const auto [kt, kh, kw] = cfg.dyn_kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(kt * kh * kw));
  DynamicExtractor ed;
  ed.kernel = params.add_uniform("frontend.dyn.kernel", {cfg.dyn_channels, 1, kt, kh, kw}, kReluGain * bound, rng);
  ed.bias = params.add_uniform("frontend.dyn.bias", {cfg.dyn_channels}, bound, rng);
  return ed;
}

VisualExtractor make_visual_extractor(const FrontendConfig& cfg, ModelParams& params, Rng& rng) {
  cfg.validate();
  VisualExtractor ev;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(cfg.dyn_channels * 9));
  ev.conv1 = params.add_uniform("frontend.vis.conv1", {cfg.visual_channels1, cfg.dyn_channels, 3, 3}, kReluGain * b1, rng);
  ev.bias1 = params.add_uniform("frontend.vis.bias1", {cfg.visual_channels1}, b1, rng);
  const double b2 = 1.0 / std::sqrt(static_cast<double>(cfg.visual_channels1 * 9));
  ev.conv2 = params.add_uniform("frontend.vis.conv2", {cfg.visual_channels2, cfg.visual_channels1, 3, 3}, kReluGain * b2, rng);
  ev.bias2 = params.add_uniform("frontend.vis.bias2", {cfg.visual_channels2}, b2, rng);
  const std::size_t side = cfg.frame_px / 8;
  ev.proj = make_linear(params, "frontend.vis.proj", cfg.visual_channels2 * side * side, cfg.visual_dim, rng);
  return ev;
}

Tensor extract_dynamic(const Tensor& frames, const DynamicExtractor& ed) {
  if (frames.rank() != 5 || frames.dim(1) != 1) {
    throw DimensionError("frames must be [B,1,T,H,W], got " + shape_str(frames.shape()));
  }
  if (frames.dim(0) == 0) throw UsageError("extract_dynamic on an empty batch");
  return conv3d_local(frames, ed.kernel, ed.bias);
}

Tensor extract_visual(const Tensor& dyn, const VisualExtractor& ev) {
  if (dyn.rank() != 5) {
    throw DimensionError("dynamic features must be [B,C,T,H,W], got " + shape_str(dyn.shape()));
  }
  const std::size_t b = dyn.dim(0);
  const std::size_t t = dyn.dim(2);
  // Each frame is an independent image; the first conv yields [B*T, C1, H/2, W/2].
  Tensor x = relu(conv2d_frames(dyn, ev.conv1, 2, ev.bias1));
  x = relu(conv2d(x, ev.conv2, 2, ev.bias2));
  x = avg_pool2d(x, 2);
  x = reshape(x, {b, t, x.numel() / (b * t)});
  return linear(x, ev.proj);
}

}  // namespace lipdyn
