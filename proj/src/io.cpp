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

#include "lipdyn/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lipdyn/errors.hpp"

namespace lipdyn {

using nlohmann::json;

namespace {

constexpr char kTensorMagic[8] = {'L', 'D', 'T', 'E', 'N', 'S', 'O', 'R'};
constexpr char kCheckpointMagic[8] = {'L', 'D', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64s(std::span<const double> v) { raw(v.data(), v.size() * sizeof(double)); }
  void str(std::string_view s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}
  void raw(void* p, std::size_t n) {
    if (n > bytes_.size() - pos_) throw LoadError(what_ + ": truncated");
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::vector<double> f64s(std::size_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw LoadError(what_ + ": truncated");
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > bytes_.size() - pos_) throw LoadError(what_ + ": truncated");
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& what() const { return what_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

void put_tensor(Writer& w, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u64(d);
  w.f64s(t.data());
}

Tensor get_tensor(Reader& r) {
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw LoadError(r.what() + ": implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = r.u64();
  return Tensor(shape, r.f64s(shape_numel(shape)));
}

std::string clip_file_name(const std::string& clip_id) { return "frames/" + clip_id + ".bin"; }

json speaker_json(const SpeakerProfile& s) {
  json offsets = json::array();
  for (const auto& o : s.offsets) offsets.push_back({o[0], o[1]});
  return {{"speaker_id", s.speaker_id}, {"offsets", offsets},           {"scale", s.scale},
          {"center_dx", s.center_dx},   {"center_dy", s.center_dy},     {"skin_tone", s.skin_tone},
          {"lip_tone", s.lip_tone},     {"texture_seed", s.texture_seed}};
}

SpeakerProfile speaker_from_json(const json& j) {
  SpeakerProfile s;
  s.speaker_id = j.at("speaker_id").get<std::string>();
  for (const auto& o : j.at("offsets")) s.offsets.push_back({o.at(0).get<double>(), o.at(1).get<double>()});
  s.scale = j.at("scale").get<double>();
  s.center_dx = j.at("center_dx").get<double>();
  s.center_dy = j.at("center_dy").get<double>();
  s.skin_tone = j.at("skin_tone").get<double>();
  s.lip_tone = j.at("lip_tone").get<double>();
  s.texture_seed = j.at("texture_seed").get<std::uint64_t>();
  return s;
}

json synth_json(const SynthConfig& c) {
  return {{"classes", c.classes},       {"speakers", c.speakers},   {"test_speakers", c.test_speakers},
          {"clips_per", c.clips_per},   {"val_per", c.val_per},     {"frames", c.frames},
          {"frame_px", c.frame_px},     {"phases", c.phases},       {"class_distance_floor", c.class_distance_floor},
          {"seed", c.seed}};
}

SynthConfig synth_from_json(const json& j) {
  SynthConfig c;
  c.classes = j.at("classes").get<std::size_t>();
  c.speakers = j.at("speakers").get<std::size_t>();
  c.test_speakers = j.at("test_speakers").get<std::size_t>();
  c.clips_per = j.at("clips_per").get<std::size_t>();
  c.val_per = j.at("val_per").get<std::size_t>();
  c.frames = j.at("frames").get<std::size_t>();
  c.frame_px = j.at("frame_px").get<std::size_t>();
  c.phases = j.at("phases").get<std::size_t>();
  c.class_distance_floor = j.at("class_distance_floor").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + fs::absolute(tmp).string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + fs::absolute(tmp).string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("file not found: " + fs::absolute(path).string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string encode_tensor(const Tensor& t) {
  Writer w;
  w.raw(kTensorMagic, sizeof kTensorMagic);
  put_tensor(w, t);
  return w.take();
}

Tensor decode_tensor(std::string_view bytes, const std::string& what) {
  Reader r(bytes, what);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kTensorMagic, sizeof magic) != 0) throw LoadError(what + ": not a tensor file");
  Tensor t = get_tensor(r);
  if (!r.done()) throw LoadError(what + ": trailing bytes");
  return t;
}

void write_tensor_file(const fs::path& path, const Tensor& t) { atomic_write(path, encode_tensor(t)); }

Tensor read_tensor_file(const fs::path& path) { return decode_tensor(read_file(path), path.string()); }

std::string landmark_record(const LandmarkSequence& seq) {
  const std::size_t T = seq.frames();
  const auto c = seq.coords.data();
  json coords = json::array();
  for (std::size_t t = 0; t < T; ++t) {
    json frame = json::array();
    for (std::size_t k = 0; k < kLipNodes; ++k) {
      frame.push_back({c[(t * kLipNodes + k) * 2], c[(t * kLipNodes + k) * 2 + 1]});
    }
    coords.push_back(std::move(frame));
  }
  json j = {{"clip_id", seq.clip_id},
            {"speaker_id", seq.speaker_id},
            {"label", seq.label},
            {"frame_size", seq.frame_size},
            {"coords", std::move(coords)}};
  return j.dump();
}

LandmarkSequence parse_landmark_record(std::string_view line, std::size_t line_no) {
  const std::string where = "landmark record at line " + std::to_string(line_no);
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError(where + ": not a JSON object");
  LandmarkSequence seq;
  try {
    seq.clip_id = j.at("clip_id").get<std::string>();
    seq.speaker_id = j.at("speaker_id").get<std::string>();
    seq.label = j.at("label").get<int>();
    seq.frame_size = j.at("frame_size").get<double>();
    const json& frames = j.at("coords");
    if (!frames.is_array() || frames.empty()) throw DataError(where + ": coords must be a non-empty array");
    std::vector<double> values;
    values.reserve(frames.size() * kLipNodes * 2);
    for (const auto& frame : frames) {
      if (!frame.is_array() || frame.size() != kLipNodes) {
        throw DataError(where + ": every frame needs " + std::to_string(kLipNodes) + " points");
      }
      for (const auto& p : frame) {
        if (!p.is_array() || p.size() != 2) throw DataError(where + ": points must be [x, y]");
        values.push_back(p.at(0).get<double>());
        values.push_back(p.at(1).get<double>());
      }
    }
    seq.coords = Tensor({frames.size(), kLipNodes, 2}, std::move(values));
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  try {
    seq.validate();
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  }
  return seq;
}

std::vector<LandmarkSequence> read_landmark_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("file not found: " + fs::absolute(path).string());
  std::vector<LandmarkSequence> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_landmark_record(line, n));
  }
  return out;
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError(fs::absolute(dir).string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw UsageError("output directory " + fs::absolute(dir).string() + " is not empty (use --force)");
    }
  }
  fs::create_directories(dir);
}

void save_dataset(const Dataset& ds, const fs::path& dir, bool force) {
  prepare_output_dir(dir, force);
  json clips = json::array();
  std::string jsonl;
  auto emit = [&](const std::vector<SyntheticClip>& split, const char* name) {
    for (const auto& c : split) {
      write_tensor_file(dir / clip_file_name(c.clip_id()), c.frames);
      jsonl += landmark_record(c.landmarks);
      jsonl += '\n';
      clips.push_back({{"clip_id", c.clip_id()},
                       {"speaker_id", c.speaker_id},
                       {"label", c.label},
                       {"split", name},
                       {"seed", c.seed},
                       {"frames", clip_file_name(c.clip_id())}});
    }
  };
  emit(ds.train, "train");
  emit(ds.val, "val");
  emit(ds.test, "test");

  std::set<std::string> train_spk, test_spk;
  for (const auto& c : ds.train) train_spk.insert(c.speaker_id);
  for (const auto& c : ds.val) train_spk.insert(c.speaker_id);
  for (const auto& c : ds.test) test_spk.insert(c.speaker_id);
  json speakers = json::array();
  for (const auto& s : ds.speakers) speakers.push_back(speaker_json(s));
  json classes = json::array();
  for (const auto& c : ds.classes) classes.push_back({{"index", c.index}, {"targets", c.targets}, {"timing_jitter", c.timing_jitter}});
  json manifest = {{"format", "lipdyn-dataset"},
                   {"version", 1},
                   {"config", synth_json(ds.config)},
                   {"splits",
                    {{"train", {{"clips", ds.train.size()}, {"speakers", train_spk}}},
                     {"val", {{"clips", ds.val.size()}}},
                     {"test", {{"clips", ds.test.size()}, {"speakers", test_spk}}}}},
                   {"speakers", speakers},
                   {"classes", classes},
                   {"landmarks", "landmarks.jsonl"},
                   {"clips", clips}};
  atomic_write(dir / "landmarks.jsonl", jsonl);
  atomic_write(dir / "manifest.json", manifest.dump(1));
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  json manifest = json::parse(read_file(manifest_path), nullptr, false);
  if (manifest.is_discarded() || manifest.value("format", "") != "lipdyn-dataset") {
    throw DataError(fs::absolute(manifest_path).string() + " is not a dataset manifest");
  }
  Dataset ds;
  try {
    ds.config = synth_from_json(manifest.at("config"));
    for (const auto& s : manifest.at("speakers")) ds.speakers.push_back(speaker_from_json(s));
    for (const auto& c : manifest.at("classes")) {
      WordClassSpec spec;
      spec.index = c.at("index").get<int>();
      spec.targets = c.at("targets").get<std::vector<std::array<double, 3>>>();
      spec.timing_jitter = c.at("timing_jitter").get<double>();
      ds.classes.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw DataError(fs::absolute(manifest_path).string() + ": " + e.what());
  }
  std::map<std::string, LandmarkSequence> tracks;
  for (auto& seq : read_landmark_file(dir / manifest.value("landmarks", "landmarks.jsonl"))) {
    std::string id = seq.clip_id;
    tracks.emplace(std::move(id), std::move(seq));
  }
  for (const auto& entry : manifest.at("clips")) {
    SyntheticClip clip;
    const std::string id = entry.at("clip_id").get<std::string>();
    auto it = tracks.find(id);
    if (it == tracks.end()) throw DataError("clip '" + id + "' has no landmark record");
    clip.landmarks = it->second;
    clip.speaker_id = entry.at("speaker_id").get<std::string>();
    clip.label = entry.at("label").get<int>();
    clip.seed = entry.at("seed").get<std::uint64_t>();
    clip.frames = read_tensor_file(dir / entry.at("frames").get<std::string>());
    if (clip.frames.rank() != 3 || clip.frames.dim(0) != clip.landmarks.frames()) {
      throw DataError("clip '" + id + "': frames " + shape_str(clip.frames.shape()) +
                      " do not match its landmark track");
    }
    const std::string split = entry.at("split").get<std::string>();
    if (split == "train") {
      ds.train.push_back(std::move(clip));
    } else if (split == "val") {
      ds.val.push_back(std::move(clip));
    } else if (split == "test") {
      ds.test.push_back(std::move(clip));
    } else {
      throw DataError("clip '" + id + "' has unknown split '" + split + "'");
    }
  }
  return ds;
}

std::string encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(ck.version);
  w.u64(ck.arch_hash);
  w.u64(ck.seed);
  w.str(ck.config_json);
  w.u64(ck.params.size());
  for (const auto& [name, t] : ck.params) {
    w.str(name);
    put_tensor(w, t);
  }
  w.u32(ck.has_optim ? 1 : 0);
  if (ck.has_optim) {
    w.u64(ck.optim.step);
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      w.f64s(ck.optim.m.at(i));
      w.f64s(ck.optim.v.at(i));
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes, "checkpoint");
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw LoadError("not a lipdyn checkpoint");
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != 1) throw LoadError("unsupported checkpoint version " + std::to_string(ck.version));
  ck.arch_hash = r.u64();
  ck.seed = r.u64();
  ck.config_json = r.str();
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    ck.params.emplace_back(std::move(name), get_tensor(r));
  }
  ck.has_optim = r.u32() != 0;
  if (ck.has_optim) {
    ck.optim.step = r.u64();
    for (const auto& [name, t] : ck.params) {
      ck.optim.m.push_back(r.f64s(t.numel()));
      ck.optim.v.push_back(r.f64s(t.numel()));
    }
  }
  if (!r.done()) throw LoadError("checkpoint has trailing bytes");
  return ck;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ck) { atomic_write(path, encode_checkpoint(ck)); }

Checkpoint read_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw LoadError("checkpoint not found: " + fs::absolute(path).string());
  return decode_checkpoint(read_file(path));
}

void load_params(ModelParams& params, const Checkpoint& ck) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, t] : ck.params) stored.emplace(name, &t);
  std::vector<std::string> missing, unexpected;
  for (const auto& [name, t] : params.entries()) {
    if (!stored.count(name)) missing.push_back(name);
  }
  for (const auto& [name, t] : ck.params) {
    if (!params.contains(name)) unexpected.push_back(name);
  }
  if (!missing.empty() || !unexpected.empty()) {
    std::string msg = "checkpoint does not match the model architecture";
    auto list = [&](const char* label, const std::vector<std::string>& names) {
      if (names.empty()) return;
      msg += std::string("; ") + label + ":";
      for (const auto& n : names) msg += " " + n;
    };
    list("missing", missing);
    list("unexpected", unexpected);
    throw LoadError(msg);
  }
  for (const auto& [name, t] : params.entries()) {
    const Tensor& src = *stored.at(name);
    if (src.shape() != t.shape()) {
      throw LoadError("parameter '" + name + "' has shape " + shape_str(src.shape()) + " in the checkpoint, " +
                      shape_str(t.shape()) + " in the model");
    }
    Tensor dst = t;
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  }
}

}  // namespace lipdyn
