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
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lipdyn/model.hpp"
#include "lipdyn/optim.hpp"
#include "lipdyn/synth.hpp"

namespace lipdyn {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  AdamWConfig optim;
  double flip_p = 0.5;
  std::size_t mask_max_len = 5;
  /// "low" trains on a per-speaker third of the training split, "high" on all of it.
  std::string resource = "low";
  double low_fraction = 1.0 / 3.0;
  /// Validation pass every this many epochs; 0 disables it.
  std::size_t val_every = 1;

  void validate() const;
};

struct RobustConfig {
  double visual_sigma = 0.05;
  double landmark_sigma = 0.5;
};

/// Everything one run depends on. Serialized as nested JSON sections
/// data, model, fusion, train, robust plus a top-level seed.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  SynthConfig data;
  ModelConfig model;
  TrainConfig train;
  RobustConfig robust;

  /// Cross-section checks (class count and frame size must agree).
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Every key must be known and of the right type; missing keys keep defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" overrides; the value is parsed as JSON when it
/// parses, else taken as a string.
void apply_override(nlohmann::json& j, std::string_view assignment);

/// Loads an optional config file, applies overrides, validates.
ExperimentConfig resolve_config(const std::filesystem::path* file, const std::vector<std::string>& overrides);

/// 64-bit FNV-1a of a byte string.
std::uint64_t fnv1a64(std::string_view bytes);
/// Hash of the architecture-defining sections (model and fusion).
std::uint64_t architecture_hash(const ExperimentConfig& cfg);
/// Hash of the whole resolved configuration.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hash_hex(std::uint64_t h);

}  // namespace lipdyn
