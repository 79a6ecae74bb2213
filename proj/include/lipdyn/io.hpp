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

#include "lipdyn/graphs.hpp"
#include "lipdyn/optim.hpp"
#include "lipdyn/params.hpp"
#include "lipdyn/synth.hpp"
#include "lipdyn/tensor.hpp"

namespace lipdyn {

namespace fs = std::filesystem;

/// Writes bytes to a sibling temp file and renames it over the target.
void atomic_write(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

/// Flat tensor file: 8-byte magic "LDTENSOR", u32 rank, u64 dims, then
/// little-endian f64 values in row-major order.
std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes, const std::string& what);
void write_tensor_file(const fs::path& path, const Tensor& t);
Tensor read_tensor_file(const fs::path& path);

/// One JSON line {clip_id, speaker_id, label, frame_size, coords: T x 20 x [x,y]}.
std::string landmark_record(const LandmarkSequence& seq);
/// Throws DataError naming the line number on malformed input.
LandmarkSequence parse_landmark_record(std::string_view line, std::size_t line_no);
std::vector<LandmarkSequence> read_landmark_file(const fs::path& path);

/// Dataset directory: manifest.json, landmarks.jsonl and frames/<clip_id>.bin.
/// Refuses a non-empty directory unless force is set.
void save_dataset(const Dataset& ds, const fs::path& dir, bool force);
Dataset load_dataset(const fs::path& dir);

/// Throws UsageError if dir exists and is not empty and force is not set.
void prepare_output_dir(const fs::path& dir, bool force);

struct Checkpoint {
  std::uint32_t version = 1;
  std::uint64_t arch_hash = 0;
  std::uint64_t seed = 0;
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> params;
  OptimState optim;
  bool has_optim = false;
};

std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::string_view bytes);
void write_checkpoint(const fs::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const fs::path& path);

/// Copies checkpoint values into params. Throws LoadError listing missing
/// and unexpected names, or naming the first shape mismatch.
void load_params(ModelParams& params, const Checkpoint& ck);

}  // namespace lipdyn
