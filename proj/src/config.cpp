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

#include "lipdyn/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lipdyn/errors.hpp"

namespace lipdyn {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(flip_p >= 0.0 && flip_p <= 1.0)) throw ConfigError("train.flip_p must lie in [0, 1]");
  if (resource != "low" && resource != "high") {
    throw ConfigError("train.resource must be 'low' or 'high', got '" + resource + "'");
  }
  if (!(low_fraction > 0.0 && low_fraction <= 1.0)) throw ConfigError("train.low_fraction must lie in (0, 1]");
  optim.validate();
}

void ExperimentConfig::validate() const {
  data.validate();
  model.validate();
  train.validate();
  if (model.backend.classes != data.classes) {
    throw ConfigError("model.backend.classes (" + std::to_string(model.backend.classes) +
                      ") must equal data.classes (" + std::to_string(data.classes) + ")");
  }
  if (model.frontend.frame_px != data.frame_px) {
    throw ConfigError("model.frontend.frame_px must equal data.frame_px");
  }
  if (train.mask_max_len > data.frames) {
    throw ConfigError("train.mask_max_len exceeds data.frames");
  }
  if (!(robust.visual_sigma >= 0.0) || !(robust.landmark_sigma >= 0.0)) {
    throw ConfigError("robust sigmas must be >= 0");
  }
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["data"] = {{"classes", c.data.classes},
               {"speakers", c.data.speakers},
               {"test_speakers", c.data.test_speakers},
               {"clips_per", c.data.clips_per},
               {"val_per", c.data.val_per},
               {"frames", c.data.frames},
               {"frame_px", c.data.frame_px},
               {"phases", c.data.phases},
               {"class_distance_floor", c.data.class_distance_floor},
               {"seed", c.data.seed}};
  const auto& f = c.model.frontend;
  const auto& b = c.model.backend;
  j["model"] = {{"frontend",
                 {{"dyn_channels", f.dyn_channels},
                  {"visual_dim", f.visual_dim},
                  {"frame_px", f.frame_px},
                  {"dyn_kernel", f.dyn_kernel},
                  {"visual_channels1", f.visual_channels1},
                  {"visual_channels2", f.visual_channels2}}},
                {"branch_layers", c.model.branch_layers},
                {"branch_temporal_kernel", c.model.branch_temporal_kernel},
                {"backend",
                 {{"dilations", b.dilations},
                  {"kernel_width", b.kernel_width},
                  {"classes", b.classes},
                  {"head_hidden", b.head_hidden},
                  {"smoothing", b.smoothing}}},
                {"use_dag", c.model.use_dag},
                {"use_lcg", c.model.use_lcg},
                {"use_sag", c.model.use_sag},
                {"dag_epsilon", c.model.dag_epsilon}};
  j["fusion"] = {{"mode", c.model.fusion_mode}};
  const auto& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr", t.optim.lr},
                {"beta1", t.optim.beta1},
                {"beta2", t.optim.beta2},
                {"eps", t.optim.eps},
                {"weight_decay", t.optim.weight_decay},
                {"flip_p", t.flip_p},
                {"mask_max_len", t.mask_max_len},
                {"resource", t.resource},
                {"low_fraction", t.low_fraction},
                {"val_every", t.val_every}};
  j["robust"] = {{"visual_sigma", c.robust.visual_sigma}, {"landmark_sigma", c.robust.landmark_sigma}};
  return j;
}

namespace {

const char* kind_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_unsigned()) return "non-negative integer";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integers may not take fractional or negative values.
    if (a.is_number_unsigned()) return b.is_number_unsigned() || (b.is_number_integer() && b.get<std::int64_t>() >= 0);
    return true;
  }
  return std::string_view(kind_name(a)) == kind_name(b);
}

/// Overlays src onto dst, refusing keys or kinds dst does not have.
void merge_checked(json& dst, const json& src, const std::string& path) {
  if (!src.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!dst.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = dst[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else if (!same_kind(slot, it.value())) {
      throw ConfigError("config key '" + key + "' expects a " + kind_name(slot) + ", got " +
                        kind_name(it.value()));
    } else {
      slot = it.value();
    }
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& section) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + section + "." + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& user) {
  json j = to_json(ExperimentConfig{});
  merge_checked(j, user, "");
  ExperimentConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  const json& d = j.at("data");
  c.data.classes = field<std::size_t>(d, "classes", "data");
  c.data.speakers = field<std::size_t>(d, "speakers", "data");
  c.data.test_speakers = field<std::size_t>(d, "test_speakers", "data");
  c.data.clips_per = field<std::size_t>(d, "clips_per", "data");
  c.data.val_per = field<std::size_t>(d, "val_per", "data");
  c.data.frames = field<std::size_t>(d, "frames", "data");
  c.data.frame_px = field<std::size_t>(d, "frame_px", "data");
  c.data.phases = field<std::size_t>(d, "phases", "data");
  c.data.class_distance_floor = field<double>(d, "class_distance_floor", "data");
  c.data.seed = field<std::uint64_t>(d, "seed", "data");

  const json& m = j.at("model");
  const json& f = m.at("frontend");
  c.model.frontend.dyn_channels = field<std::size_t>(f, "dyn_channels", "model.frontend");
  c.model.frontend.visual_dim = field<std::size_t>(f, "visual_dim", "model.frontend");
  c.model.frontend.frame_px = field<std::size_t>(f, "frame_px", "model.frontend");
  const auto kernel = field<std::vector<std::size_t>>(f, "dyn_kernel", "model.frontend");
  if (kernel.size() != 3) throw ConfigError("model.frontend.dyn_kernel needs 3 extents");
  c.model.frontend.dyn_kernel = {kernel[0], kernel[1], kernel[2]};
  c.model.frontend.visual_channels1 = field<std::size_t>(f, "visual_channels1", "model.frontend");
  c.model.frontend.visual_channels2 = field<std::size_t>(f, "visual_channels2", "model.frontend");
  c.model.branch_layers = field<std::size_t>(m, "branch_layers", "model");
  c.model.branch_temporal_kernel = field<std::size_t>(m, "branch_temporal_kernel", "model");
  const json& b = m.at("backend");
  c.model.backend.dilations = field<std::vector<std::size_t>>(b, "dilations", "model.backend");
  c.model.backend.kernel_width = field<std::size_t>(b, "kernel_width", "model.backend");
  c.model.backend.classes = field<std::size_t>(b, "classes", "model.backend");
  c.model.backend.head_hidden = field<std::size_t>(b, "head_hidden", "model.backend");
  c.model.backend.smoothing = field<double>(b, "smoothing", "model.backend");
  c.model.use_dag = field<bool>(m, "use_dag", "model");
  c.model.use_lcg = field<bool>(m, "use_lcg", "model");
  c.model.use_sag = field<bool>(m, "use_sag", "model");
  c.model.dag_epsilon = field<double>(m, "dag_epsilon", "model");
  c.model.fusion_mode = field<std::string>(j.at("fusion"), "mode", "fusion");

  const json& t = j.at("train");
  c.train.epochs = field<std::size_t>(t, "epochs", "train");
  c.train.batch_size = field<std::size_t>(t, "batch_size", "train");
  c.train.optim.lr = field<double>(t, "lr", "train");
  c.train.optim.beta1 = field<double>(t, "beta1", "train");
  c.train.optim.beta2 = field<double>(t, "beta2", "train");
  c.train.optim.eps = field<double>(t, "eps", "train");
  c.train.optim.weight_decay = field<double>(t, "weight_decay", "train");
  c.train.flip_p = field<double>(t, "flip_p", "train");
  c.train.mask_max_len = field<std::size_t>(t, "mask_max_len", "train");
  c.train.resource = field<std::string>(t, "resource", "train");
  c.train.low_fraction = field<double>(t, "low_fraction", "train");
  c.train.val_every = field<std::size_t>(t, "val_every", "train");

  const json& r = j.at("robust");
  c.robust.visual_sigma = field<double>(r, "visual_sigma", "robust");
  c.robust.landmark_sigma = field<double>(r, "landmark_sigma", "robust");
  return c;
}

void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw UsageError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw UsageError("override key '" + key + "' has an empty component");
    patch = json{{*it, patch}};
  }
  json base = to_json(ExperimentConfig{});
  merge_checked(base, patch, "");  // validates key and kind
  j.merge_patch(patch);
}

ExperimentConfig resolve_config(const std::filesystem::path* file, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (file != nullptr) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + std::filesystem::absolute(*file).string());
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + file->string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig cfg = config_from_json(j);
  cfg.validate();
  return cfg;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t architecture_hash(const ExperimentConfig& cfg) {
  const json j = to_json(cfg);
  return fnv1a64(json{{"model", j.at("model")}, {"fusion", j.at("fusion")}}.dump());
}

std::uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a64(to_json(cfg).dump()); }

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lipdyn
