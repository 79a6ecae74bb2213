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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lipdyn/graphs.hpp"
#include "lipdyn/model.hpp"
#include "lipdyn/tensor.hpp"

namespace lipdyn {

/// Per-speaker nuisance factors: lip shape, scale, placement and appearance.
struct SpeakerProfile {
  std::string speaker_id;
  std::vector<std::array<double, 2>> offsets;  // per landmark, pixels
  double scale = 1.0;
  double center_dx = 0.0;
  double center_dy = 0.0;
  double skin_tone = 0.35;
  double lip_tone = 0.85;
  std::uint64_t texture_seed = 0;
};

/// Articulation program of one word: keyframe targets for mouth opening,
/// spreading and protrusion, each in [0,1].
struct WordClassSpec {
  int index = 0;
  std::vector<std::array<double, 3>> targets;
  /// Maximum keyframe shift in frames.
  double timing_jitter = 1.5;
};

struct SyntheticClip {
  Tensor frames;  // [T,H,W] in [0,1]
  LandmarkSequence landmarks;
  std::string speaker_id;
  int label = 0;
  std::uint64_t seed = 0;

  const std::string& clip_id() const { return landmarks.clip_id; }
};

struct SynthConfig {
  std::size_t classes = 10;
  std::size_t speakers = 12;
  /// Speakers held out for the unseen-speaker test split; 0 means speakers / 3.
  std::size_t test_speakers = 0;
  std::size_t clips_per = 30;
  /// Clips per (train speaker, class) moved to the validation split.
  std::size_t val_per = 1;
  std::size_t frames = 29;
  std::size_t frame_px = 16;
  std::size_t phases = 4;
  /// Minimum RMS landmark distance between class mean trajectories, pixels.
  double class_distance_floor = 0.35;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t resolved_test_speakers() const;
};

struct Dataset {
  SynthConfig config;
  std::vector<SpeakerProfile> speakers;
  std::vector<WordClassSpec> classes;
  std::vector<SyntheticClip> train;
  std::vector<SyntheticClip> val;
  std::vector<SyntheticClip> test;
};

/// Seeded mixing of a base seed with a stream index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

std::vector<WordClassSpec> make_word_classes(const SynthConfig& cfg);
SpeakerProfile make_speaker(const SynthConfig& cfg, std::size_t index);

/// Mouth-shape parameters (opening, spreading, protrusion) per frame.
std::vector<std::array<double, 3>> articulation_track(const WordClassSpec& cls, std::size_t frames,
                                                      std::uint64_t seed);

/// Ground-truth contour for one frame, [20][2] pixels.
std::vector<std::array<double, 2>> lip_contour(const std::array<double, 3>& shape,
                                               const SpeakerProfile& speaker, std::size_t frame_px);

SyntheticClip render_clip(const SynthConfig& cfg, const WordClassSpec& cls,
                          const SpeakerProfile& speaker, std::size_t index, std::uint64_t seed);

/// Deterministic dataset with speaker-disjoint train and test splits.
/// Throws ConfigError when the split is impossible.
Dataset generate_dataset(const SynthConfig& cfg);
Dataset generate_dataset(std::size_t classes, std::size_t speakers, std::size_t clips_per,
                         std::uint64_t seed);

struct MaskConfig {
  std::size_t max_len = 5;
};

/// Random horizontal flip and temporal masking. A flip mirrors frames,
/// maps x to (W-1)-x and relabels nodes by the mirror permutation; a mask
/// replaces a frame span and its landmarks with the span mean.
SyntheticClip augment(const SyntheticClip& clip, double flip_p, const MaskConfig& mask,
                      std::uint64_t seed);
SyntheticClip flip_clip(const SyntheticClip& clip);
SyntheticClip mask_clip(const SyntheticClip& clip, std::size_t begin, std::size_t length);

/// Adds N(0, sigma^2) to every pixel and clamps to [0,1].
SyntheticClip perturb_visual(const SyntheticClip& clip, double sigma, std::uint64_t seed);
/// Adds N(0, sigma^2) to every coordinate and clamps into the crop.
SyntheticClip perturb_landmarks(const SyntheticClip& clip, double sigma, std::uint64_t seed);

/// Uniform per-speaker subsample keeping round(n * fraction) clips of each
/// speaker (at least one), in original order.
std::vector<SyntheticClip> low_resource_subset(const std::vector<SyntheticClip>& clips,
                                               double fraction, std::uint64_t seed);

/// Stacks clips into a model batch.
ClipBatch make_batch(std::span<const SyntheticClip* const> clips);
ClipBatch make_batch(const std::vector<SyntheticClip>& clips, std::size_t begin, std::size_t end);

}  // namespace lipdyn
