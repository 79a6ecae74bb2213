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

#include <filesystem>
#include <fstream>
#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "lipdyn/config.hpp"
#include "lipdyn/errors.hpp"
#include "lipdyn/io.hpp"
#include "lipdyn/synth.hpp"
#include "oracles.hpp"

namespace lipdyn {
namespace {

namespace fs = std::filesystem;

SynthConfig small_config() {
  SynthConfig c;
  c.classes = 3;
  c.speakers = 4;
  c.clips_per = 3;
  c.frames = 9;
  c.seed = 5;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lipdyn_test_" + name);
  fs::remove_all(p);
  return p;
}

// ---------------------------------------------------------------------------
// Synthetic data

TEST(Synth, SplitsAreSpeakerDisjoint) {
  const Dataset ds = generate_dataset(small_config());
  std::set<std::string> train, test;
  for (const auto& c : ds.train) train.insert(c.speaker_id);
  for (const auto& c : ds.val) EXPECT_TRUE(train.count(c.speaker_id));
  for (const auto& c : ds.test) test.insert(c.speaker_id);
  for (const auto& s : test) EXPECT_FALSE(train.count(s));
  EXPECT_EQ(train.size() + test.size(), 4u);
  EXPECT_EQ(ds.train.size() + ds.val.size() + ds.test.size(), 3u * 4u * 3u);
}

TEST(Synth, DefaultDatasetShape) {
  const SynthConfig c;
  EXPECT_EQ(c.classes, 10u);
  EXPECT_EQ(c.speakers, 12u);
  EXPECT_EQ(c.resolved_test_speakers(), 4u);
}

TEST(Synth, DeterministicInSeed) {
  const Dataset a = generate_dataset(small_config());
  const Dataset b = generate_dataset(small_config());
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(oracle::max_abs_diff(a.train[i].frames, b.train[i].frames), 0.0);
    EXPECT_EQ(oracle::max_abs_diff(a.train[i].landmarks.coords, b.train[i].landmarks.coords), 0.0);
  }
  SynthConfig other = small_config();
  other.seed = 6;
  EXPECT_GT(oracle::max_abs_diff(generate_dataset(other).train[0].frames, a.train[0].frames), 0.0);
}

TEST(Synth, TwoSpeakersCannotSplit) {
  SynthConfig c = small_config();
  c.speakers = 2;
  EXPECT_THROW(generate_dataset(c), ConfigError);
}

TEST(Synth, FramesAndLandmarksInRange) {
  const Dataset ds = generate_dataset(small_config());
  for (const auto& c : ds.test) {
    EXPECT_EQ(c.frames.shape(), (Shape{9, 16, 16}));
    for (double v : c.frames.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_NO_THROW(c.landmarks.validate());
  }
}

TEST(Augment, FlipTwiceIsIdentity) {
  const Dataset ds = generate_dataset(small_config());
  const SyntheticClip& c = ds.train[0];
  const SyntheticClip once = flip_clip(c);
  const SyntheticClip twice = flip_clip(once);
  EXPECT_EQ(oracle::max_abs_diff(twice.frames, c.frames), 0.0);
  EXPECT_LE(oracle::max_abs_diff(twice.landmarks.coords, c.landmarks.coords), 1e-12);
  // The left corner of the flip sits where the right corner was, mirrored.
  const auto& a = c.landmarks.coords.data();
  const auto& b = once.landmarks.coords.data();
  EXPECT_NEAR(b[0], 15.0 - a[6 * 2], 1e-12);
  EXPECT_NEAR(b[1], a[6 * 2 + 1], 1e-12);
}

TEST(Augment, MaskReplacesSpanWithMean) {
  const Dataset ds = generate_dataset(small_config());
  const SyntheticClip& c = ds.train[1];
  const SyntheticClip m = mask_clip(c, 2, 3);
  const std::size_t px = 16 * 16;
  for (std::size_t p = 0; p < px; p += 37) {
    const double mean = (c.frames.data()[2 * px + p] + c.frames.data()[3 * px + p] + c.frames.data()[4 * px + p]) / 3;
    for (std::size_t t = 2; t < 5; ++t) EXPECT_NEAR(m.frames.data()[t * px + p], mean, 1e-12);
    EXPECT_EQ(m.frames.data()[p], c.frames.data()[p]);
  }
}

TEST(Perturb, ZeroSigmaIsIdentity) {
  const Dataset ds = generate_dataset(small_config());
  const SyntheticClip& c = ds.test[0];
  EXPECT_EQ(oracle::max_abs_diff(perturb_visual(c, 0.0, 1).frames, c.frames), 0.0);
  EXPECT_EQ(oracle::max_abs_diff(perturb_landmarks(c, 0.0, 1).landmarks.coords, c.landmarks.coords), 0.0);
  EXPECT_GT(oracle::max_abs_diff(perturb_landmarks(c, 0.5, 1).landmarks.coords, c.landmarks.coords), 0.0);
}

TEST(LowResource, UniformPerSpeaker) {
  const Dataset ds = generate_dataset(small_config());
  const auto sub = low_resource_subset(ds.train, 1.0 / 3.0, 9);
  std::map<std::string, std::size_t> full, kept;
  for (const auto& c : ds.train) ++full[c.speaker_id];
  for (const auto& c : sub) ++kept[c.speaker_id];
  for (const auto& [s, n] : full) EXPECT_EQ(kept[s], std::max<std::size_t>(1, std::llround(n / 3.0)));
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, OverridesApplyByDottedKey) {
  const ExperimentConfig c = resolve_config(nullptr, {"train.epochs=7", "fusion.mode=\"wsum3\"", "seed=3"});
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.model.fusion_mode, "wsum3");
  EXPECT_EQ(c.seed, 3u);
}

TEST(Config, UnknownKeyAndBadTypeRejected) {
  EXPECT_THROW(resolve_config(nullptr, {"train.epoch=7"}), ConfigError);
  EXPECT_THROW(resolve_config(nullptr, {"train.epochs=\"many\""}), ConfigError);
  EXPECT_THROW(resolve_config(nullptr, {"train.epochs"}), UsageError);
}

TEST(Config, JsonRoundTripPreservesHash) {
  ExperimentConfig c;
  c.train.epochs = 4;
  c.model.use_sag = false;
  const ExperimentConfig back = config_from_json(to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(architecture_hash(back), architecture_hash(c));
  ExperimentConfig d = c;
  d.train.epochs = 5;
  EXPECT_EQ(architecture_hash(d), architecture_hash(c));
  EXPECT_NE(config_hash(d), config_hash(c));
}

TEST(Config, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Config, ClassMismatchRejected) {
  EXPECT_THROW(resolve_config(nullptr, {"data.classes=5"}), ConfigError);
}

// ---------------------------------------------------------------------------
// IO

TEST(Io, TensorFileRoundTrip) {
  const fs::path dir = scratch("tensor");
  fs::create_directories(dir);
  const Tensor t({2, 3}, {1.5, -2.0, 1e-300, 3.0, 0.0, -0.25});
  write_tensor_file(dir / "t.bin", t);
  EXPECT_EQ(oracle::max_abs_diff(read_tensor_file(dir / "t.bin"), t), 0.0);
  EXPECT_THROW(decode_tensor("garbage", "x"), LoadError);
  EXPECT_THROW(read_tensor_file(dir / "missing.bin"), DataError);
}

TEST(Io, LandmarkRecordRoundTrip) {
  const Dataset ds = generate_dataset(small_config());
  const LandmarkSequence& s = ds.train[0].landmarks;
  const LandmarkSequence back = parse_landmark_record(landmark_record(s), 1);
  EXPECT_EQ(back.clip_id, s.clip_id);
  EXPECT_EQ(back.label, s.label);
  EXPECT_EQ(oracle::max_abs_diff(back.coords, s.coords), 0.0);
}

TEST(Io, MalformedRecordNamesLine) {
  const fs::path dir = scratch("lm");
  fs::create_directories(dir);
  const Dataset ds = generate_dataset(small_config());
  {
    std::ofstream out(dir / "lm.jsonl");
    out << landmark_record(ds.train[0].landmarks) << "\n\n{\"clip_id\": 3}\n";
  }
  try {
    read_landmark_file(dir / "lm.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Io, DatasetRoundTripAndRefusal) {
  const fs::path dir = scratch("dataset");
  const Dataset ds = generate_dataset(small_config());
  save_dataset(ds, dir, false);
  EXPECT_THROW(save_dataset(ds, dir, false), UsageError);
  EXPECT_NO_THROW(save_dataset(ds, dir, true));
  const Dataset back = load_dataset(dir);
  ASSERT_EQ(back.test.size(), ds.test.size());
  EXPECT_EQ(back.test[2].clip_id(), ds.test[2].clip_id());
  EXPECT_EQ(oracle::max_abs_diff(back.test[2].frames, ds.test[2].frames), 0.0);
  EXPECT_EQ(back.config.seed, ds.config.seed);
}

TEST(Io, MissingDatasetNamesPath) {
  try {
    load_dataset(scratch("nothing"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("lipdyn_test_nothing"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace lipdyn
