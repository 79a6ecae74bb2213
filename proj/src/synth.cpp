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

#include "lipdyn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "lipdyn/errors.hpp"

namespace lipdyn {

namespace {

using Shape3 = std::array<double, 3>;
using Point = std::array<double, 2>;

constexpr Shape3 kNeutral{0.15, 0.4, 0.2};
constexpr double kSplatSigma = 0.9;
constexpr double kCavity = 0.08;

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::string speaker_name(std::size_t s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk%02zu", s);
  return buf;
}

std::string clip_name(std::size_t s, std::size_t c, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%02zu_c%02zu_%03zu", s, c, i);
  return buf;
}

/// Keyframe interpolation; rng adds timing and amplitude jitter when given.
std::vector<Shape3> track(const WordClassSpec& cls, std::size_t frames, std::mt19937_64* rng) {
  const std::size_t phases = cls.targets.size();
  std::vector<double> times{0.0};
  std::vector<Shape3> keys{kNeutral};
  const double span = static_cast<double>(frames - 1);
  for (std::size_t i = 0; i < phases; ++i) {
    double t = span * static_cast<double>(i + 1) / static_cast<double>(phases + 1);
    Shape3 k = cls.targets[i];
    if (rng != nullptr) {
      std::uniform_real_distribution<double> shift(-cls.timing_jitter, cls.timing_jitter);
      std::normal_distribution<double> amp(0.0, 0.04);
      t += shift(*rng);
      for (auto& v : k) v = clamp01(v + amp(*rng));
    }
    times.push_back(t);
    keys.push_back(k);
  }
  times.push_back(span);
  keys.push_back(kNeutral);
  // Jittered keyframes keep their order; ties collapse onto the earlier key.
  for (std::size_t i = 1; i < times.size(); ++i) times[i] = std::max(times[i], times[i - 1]);

  std::vector<Shape3> out(frames);
  std::size_t seg = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f);
    while (seg + 2 < times.size() && t > times[seg + 1]) ++seg;
    const double len = times[seg + 1] - times[seg];
    const double u = len > 0.0 ? smoothstep(std::clamp((t - times[seg]) / len, 0.0, 1.0)) : 1.0;
    for (std::size_t d = 0; d < 3; ++d) out[f][d] = keys[seg][d] + u * (keys[seg + 1][d] - keys[seg][d]);
  }
  return out;
}

double segment_distance(const Point& p, const Point& a, const Point& b) {
  const double vx = b[0] - a[0];
  const double vy = b[1] - a[1];
  const double wx = p[0] - a[0];
  const double wy = p[1] - a[1];
  const double len2 = vx * vx + vy * vy;
  const double u = len2 > 0.0 ? std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0) : 0.0;
  const double dx = wx - u * vx;
  const double dy = wy - u * vy;
  return std::sqrt(dx * dx + dy * dy);
}

double ring_distance(const Point& p, const std::vector<Point>& pts, const std::vector<std::size_t>& ring) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < ring.size(); ++k) {
    best = std::min(best, segment_distance(p, pts[ring[k]], pts[ring[(k + 1) % ring.size()]]));
  }
  return best;
}

bool inside_ring(const Point& p, const std::vector<Point>& pts, const std::vector<std::size_t>& ring) {
  bool in = false;
  for (std::size_t k = 0, j = ring.size() - 1; k < ring.size(); j = k++) {
    const Point& a = pts[ring[k]];
    const Point& b = pts[ring[j]];
    if ((a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0]) {
      in = !in;
    }
  }
  return in;
}

struct Texture {
  std::array<double, 3> fx{}, fy{}, phase{};
  double amp = 0.04;

  explicit Texture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> freq(0.3, 1.2);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    for (std::size_t m = 0; m < 3; ++m) {
      const double f = freq(rng);
      const double a = angle(rng);
      fx[m] = f * std::cos(a);
      fy[m] = f * std::sin(a);
      phase[m] = angle(rng);
    }
  }
  double at(double x, double y) const {
    double v = 0.0;
    for (std::size_t m = 0; m < 3; ++m) v += std::sin(fx[m] * x + fy[m] * y + phase[m]);
    return amp * v;
  }
};

std::vector<Point> as_points(const std::vector<std::array<double, 2>>& c) { return c; }

double mean_track_distance(const std::vector<std::vector<Point>>& a, const std::vector<std::vector<Point>>& b) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t k = 0; k < a[t].size(); ++k, ++n) {
      const double dx = a[t][k][0] - b[t][k][0];
      const double dy = a[t][k][1] - b[t][k][1];
      acc += dx * dx + dy * dy;
    }
  }
  return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace

void SynthConfig::validate() const {
  if (classes < 2) throw ConfigError("synth: need at least 2 classes, got " + std::to_string(classes));
  if (speakers < 3) {
    throw ConfigError("synth: need at least 3 speakers to form an unseen-speaker split, got " +
                      std::to_string(speakers));
  }
  const std::size_t st = resolved_test_speakers();
  if (st == 0 || st >= speakers) {
    throw ConfigError("synth: test speakers must leave at least one training speaker");
  }
  if (clips_per == 0 || val_per >= clips_per) {
    throw ConfigError("synth: clips_per must exceed val_per");
  }
  if (frames < 3) throw ConfigError("synth: need at least 3 frames");
  if (frame_px < 8) throw ConfigError("synth: frame_px must be at least 8");
  if (phases == 0) throw ConfigError("synth: need at least one articulation phase");
  if (!(class_distance_floor >= 0.0)) throw ConfigError("synth: class distance floor must be >= 0");
}

std::size_t SynthConfig::resolved_test_speakers() const {
  return test_speakers != 0 ? test_speakers : speakers / 3;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::array<double, 3>> articulation_track(const WordClassSpec& cls, std::size_t frames,
                                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return track(cls, frames, &rng);
}

std::vector<std::array<double, 2>> lip_contour(const std::array<double, 3>& shape,
                                               const SpeakerProfile& speaker, std::size_t frame_px) {
  const double unit = static_cast<double>(frame_px) / 16.0;
  const double s = speaker.scale * unit;
  const double open = shape[0];
  const double spread = shape[1];
  const double protrude = shape[2];
  const double cx = (static_cast<double>(frame_px) - 1.0) / 2.0 + speaker.center_dx * unit;
  const double cy = (static_cast<double>(frame_px) - 1.0) / 2.0 + (0.5 + speaker.center_dy) * unit;

  const double a = s * (4.2 + 1.2 * spread - 0.9 * protrude);
  const double hu = s * (1.6 + 0.8 * open + 0.5 * protrude);
  const double hl = s * (1.8 + 1.6 * open + 0.5 * protrude);
  const double ai = a * (0.75 - 0.15 * protrude);
  const double iu = s * (0.15 + 1.0 * open);
  const double il = s * (0.15 + 1.3 * open);

  std::vector<Point> pts(kLipNodes);
  for (std::size_t k = 0; k < 12; ++k) {
    const double phi = std::numbers::pi - std::numbers::pi * static_cast<double>(k) / 6.0;
    const double sn = std::sin(phi);
    pts[k] = {cx + a * std::cos(phi), cy - (sn >= 0.0 ? hu : hl) * sn};
  }
  for (std::size_t j = 0; j < 8; ++j) {
    const double phi = std::numbers::pi - std::numbers::pi * static_cast<double>(j) / 4.0;
    const double sn = std::sin(phi);
    pts[12 + j] = {cx + ai * std::cos(phi), cy - (sn >= 0.0 ? iu : il) * sn};
  }
  for (std::size_t k = 0; k < kLipNodes && k < speaker.offsets.size(); ++k) {
    pts[k][0] += speaker.offsets[k][0] * unit;
    pts[k][1] += speaker.offsets[k][1] * unit;
  }
  return pts;
}

SpeakerProfile make_speaker(const SynthConfig& cfg, std::size_t index) {
  std::mt19937_64 rng(derive_seed(cfg.seed, 1000 + index));
  std::uniform_real_distribution<double> off(-0.4, 0.4);
  SpeakerProfile sp;
  sp.speaker_id = speaker_name(index);
  sp.offsets.resize(kLipNodes);
  for (auto& o : sp.offsets) o = {off(rng), off(rng)};
  sp.scale = std::uniform_real_distribution<double>(0.9, 1.1)(rng);
  sp.center_dx = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  sp.center_dy = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  sp.skin_tone = std::uniform_real_distribution<double>(0.2, 0.32)(rng);
  sp.lip_tone = std::uniform_real_distribution<double>(0.72, 0.9)(rng);
  sp.texture_seed = rng();
  return sp;
}

std::vector<WordClassSpec> make_word_classes(const SynthConfig& cfg) {
  std::mt19937_64 rng(derive_seed(cfg.seed, 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SpeakerProfile neutral;
  neutral.offsets.assign(kLipNodes, {0.0, 0.0});

  std::vector<WordClassSpec> classes;
  std::vector<std::vector<std::vector<Point>>> means;
  constexpr int kMaxAttempts = 10000;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == kMaxAttempts) {
        throw ConstructionError("synth: cannot find " + std::to_string(cfg.classes) +
                                " word classes separated by " + std::to_string(cfg.class_distance_floor) +
                                " px");
      }
      WordClassSpec spec;
      spec.index = static_cast<int>(c);
      spec.targets.resize(cfg.phases);
      for (auto& t : spec.targets) t = {unit(rng), unit(rng), unit(rng)};
      std::vector<std::vector<Point>> mean;
      for (const auto& shape : track(spec, cfg.frames, nullptr)) {
        mean.push_back(lip_contour(shape, neutral, cfg.frame_px));
      }
      const bool separated = std::all_of(means.begin(), means.end(), [&](const auto& other) {
        return mean_track_distance(mean, other) >= cfg.class_distance_floor;
      });
      if (separated) {
        classes.push_back(std::move(spec));
        means.push_back(std::move(mean));
        break;
      }
    }
  }
  return classes;
}

SyntheticClip render_clip(const SynthConfig& cfg, const WordClassSpec& cls, const SpeakerProfile& speaker,
                          std::size_t index, std::uint64_t seed) {
  const std::size_t T = cfg.frames;
  const std::size_t P = cfg.frame_px;
  std::mt19937_64 rng(seed);
  const auto shapes = track(cls, T, &rng);
  const double brightness = std::uniform_real_distribution<double>(-0.03, 0.03)(rng);
  const Texture texture(speaker.texture_seed);
  const LipTopology topo = LipTopology::standard();

  std::vector<double> frames(T * P * P);
  std::vector<double> coords(T * kLipNodes * 2);
  for (std::size_t t = 0; t < T; ++t) {
    const auto pts = as_points(lip_contour(shapes[t], speaker, P));
    for (std::size_t k = 0; k < kLipNodes; ++k) {
      coords[(t * kLipNodes + k) * 2] = pts[k][0];
      coords[(t * kLipNodes + k) * 2 + 1] = pts[k][1];
    }
    double best = -1.0;
    double best_dist = 0.0;
    for (std::size_t y = 0; y < P; ++y) {
      for (std::size_t x = 0; x < P; ++x) {
        const Point p{static_cast<double>(x), static_cast<double>(y)};
        const double d = std::min(ring_distance(p, pts, topo.outer_ring), ring_distance(p, pts, topo.inner_ring));
        double base = speaker.skin_tone + texture.at(p[0], p[1]);
        if (inside_ring(p, pts, topo.inner_ring)) base = kCavity;
        const double lip = speaker.lip_tone * std::exp(-d * d / (2.0 * kSplatSigma * kSplatSigma));
        const double v = std::clamp(std::max(base, lip) + brightness, 0.0, 1.0);
        frames[(t * P + y) * P + x] = v;
        if (v > best) {
          best = v;
          best_dist = d;
        }
      }
    }
    if (best_dist > 1.0) {
      throw ConstructionError("synth: frame " + std::to_string(t) + " of " +
                              clip_name(0, static_cast<std::size_t>(cls.index), index) +
                              " has its brightest pixel " + std::to_string(best_dist) +
                              " px from the contour");
    }
  }
  SyntheticClip clip;
  clip.frames = Tensor({T, P, P}, std::move(frames));
  clip.landmarks.coords = Tensor({T, kLipNodes, 2}, std::move(coords));
  clip.landmarks.speaker_id = speaker.speaker_id;
  clip.landmarks.label = cls.index;
  clip.landmarks.frame_size = static_cast<double>(P);
  clip.speaker_id = speaker.speaker_id;
  clip.label = cls.index;
  clip.seed = seed;
  return clip;
}

Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  ds.classes = make_word_classes(cfg);
  const std::size_t train_speakers = cfg.speakers - cfg.resolved_test_speakers();
  for (std::size_t s = 0; s < cfg.speakers; ++s) ds.speakers.push_back(make_speaker(cfg, s));
  for (std::size_t s = 0; s < cfg.speakers; ++s) {
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      for (std::size_t i = 0; i < cfg.clips_per; ++i) {
        const std::uint64_t stream = (s * cfg.classes + c) * cfg.clips_per + i;
        SyntheticClip clip = render_clip(cfg, ds.classes[c], ds.speakers[s], i, derive_seed(cfg.seed, 1'000'000 + stream));
        clip.landmarks.clip_id = clip_name(s, c, i);
        clip.landmarks.validate();
        if (s >= train_speakers) {
          ds.test.push_back(std::move(clip));
        } else if (i + cfg.val_per >= cfg.clips_per) {
          ds.val.push_back(std::move(clip));
        } else {
          ds.train.push_back(std::move(clip));
        }
      }
    }
  }
  return ds;
}

Dataset generate_dataset(std::size_t classes, std::size_t speakers, std::size_t clips_per, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.classes = classes;
  cfg.speakers = speakers;
  cfg.clips_per = clips_per;
  cfg.val_per = clips_per > 1 ? std::min<std::size_t>(cfg.val_per, clips_per - 1) : 0;
  cfg.seed = seed;
  return generate_dataset(cfg);
}

SyntheticClip flip_clip(const SyntheticClip& clip) {
  const Shape& fs = clip.frames.shape();
  const std::size_t T = fs[0], H = fs[1], W = fs[2];
  std::vector<double> frames(clip.frames.numel());
  const auto src = clip.frames.data();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) frames[(t * H + y) * W + x] = src[(t * H + y) * W + (W - 1 - x)];
    }
  }
  const auto perm = LipTopology::standard().mirror_permutation();
  const std::size_t frames_n = clip.landmarks.frames();
  const double edge = clip.landmarks.frame_size - 1.0;
  std::vector<double> coords(clip.landmarks.coords.numel());
  const auto c = clip.landmarks.coords.data();
  for (std::size_t t = 0; t < frames_n; ++t) {
    for (std::size_t k = 0; k < kLipNodes; ++k) {
      const std::size_t dst = (t * kLipNodes + perm[k]) * 2;
      coords[dst] = edge - c[(t * kLipNodes + k) * 2];
      coords[dst + 1] = c[(t * kLipNodes + k) * 2 + 1];
    }
  }
  SyntheticClip out = clip;
  out.frames = Tensor(fs, std::move(frames));
  out.landmarks.coords = Tensor(clip.landmarks.coords.shape(), std::move(coords));
  return out;
}

SyntheticClip mask_clip(const SyntheticClip& clip, std::size_t begin, std::size_t length) {
  const std::size_t T = clip.frames.dim(0);
  if (length > T) {
    throw ConfigError("temporal mask of " + std::to_string(length) + " frames exceeds clip length " +
                      std::to_string(T));
  }
  if (length == 0) return clip;
  if (begin + length > T) throw UsageError("temporal mask span runs past the clip end");
  auto fill_mean = [&](const Tensor& x) {
    const std::size_t per = x.numel() / T;
    std::vector<double> v(x.data().begin(), x.data().end());
    std::vector<double> mean(per, 0.0);
    for (std::size_t t = begin; t < begin + length; ++t) {
      for (std::size_t i = 0; i < per; ++i) mean[i] += v[t * per + i];
    }
    for (auto& m : mean) m /= static_cast<double>(length);
    for (std::size_t t = begin; t < begin + length; ++t) std::copy(mean.begin(), mean.end(), v.begin() + static_cast<std::ptrdiff_t>(t * per));
    return Tensor(x.shape(), std::move(v));
  };
  SyntheticClip out = clip;
  out.frames = fill_mean(clip.frames);
  out.landmarks.coords = fill_mean(clip.landmarks.coords);
  return out;
}

SyntheticClip augment(const SyntheticClip& clip, double flip_p, const MaskConfig& mask, std::uint64_t seed) {
  const std::size_t T = clip.frames.dim(0);
  if (mask.max_len > T) {
    throw ConfigError("temporal mask max_len " + std::to_string(mask.max_len) + " exceeds clip length " +
                      std::to_string(T));
  }
  std::mt19937_64 rng(seed);
  const bool flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < flip_p;
  const std::size_t len = std::uniform_int_distribution<std::size_t>(0, mask.max_len)(rng);
  const std::size_t begin = std::uniform_int_distribution<std::size_t>(0, T - len)(rng);
  SyntheticClip out = flip ? flip_clip(clip) : clip;
  return mask_clip(out, begin, len);
}

SyntheticClip perturb_visual(const SyntheticClip& clip, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("visual noise sigma must be >= 0");
  if (sigma == 0.0) return clip;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> v(clip.frames.data().begin(), clip.frames.data().end());
  for (auto& x : v) x = std::clamp(x + noise(rng), 0.0, 1.0);
  SyntheticClip out = clip;
  out.frames = Tensor(clip.frames.shape(), std::move(v));
  return out;
}

SyntheticClip perturb_landmarks(const SyntheticClip& clip, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("landmark jitter sigma must be >= 0");
  if (sigma == 0.0) return clip;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  const double edge = clip.landmarks.frame_size - 1.0;
  std::vector<double> v(clip.landmarks.coords.data().begin(), clip.landmarks.coords.data().end());
  for (auto& x : v) x = std::clamp(x + noise(rng), 0.0, edge);
  SyntheticClip out = clip;
  out.landmarks.coords = Tensor(clip.landmarks.coords.shape(), std::move(v));
  return out;
}

std::vector<SyntheticClip> low_resource_subset(const std::vector<SyntheticClip>& clips, double fraction,
                                               std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("subset fraction must be in (0, 1]");
  std::vector<std::string> order;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    auto it = std::find(order.begin(), order.end(), clips[i].speaker_id);
    if (it == order.end()) {
      order.push_back(clips[i].speaker_id);
      groups.emplace_back();
      it = order.end() - 1;
    }
    groups[static_cast<std::size_t>(it - order.begin())].push_back(i);
  }
  std::vector<std::size_t> keep;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto idx = groups[g];
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * fraction)));
    std::mt19937_64 rng(derive_seed(seed, g));
    std::shuffle(idx.begin(), idx.end(), rng);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(k, idx.size())));
  }
  std::sort(keep.begin(), keep.end());
  std::vector<SyntheticClip> out;
  out.reserve(keep.size());
  for (auto i : keep) out.push_back(clips[i]);
  return out;
}

ClipBatch make_batch(std::span<const SyntheticClip* const> clips) {
  if (clips.empty()) throw UsageError("make_batch on an empty clip list");
  const Shape fs = clips.front()->frames.shape();
  const Shape cs = clips.front()->landmarks.coords.shape();
  ClipBatch batch;
  batch.frame_size = clips.front()->landmarks.frame_size;
  std::vector<double> frames;
  std::vector<double> coords;
  frames.reserve(clips.size() * shape_numel(fs));
  coords.reserve(clips.size() * shape_numel(cs));
  for (const SyntheticClip* c : clips) {
    if (c->frames.shape() != fs || c->landmarks.coords.shape() != cs) {
      throw DimensionError("make_batch: clip '" + c->clip_id() + "' has a different shape");
    }
    frames.insert(frames.end(), c->frames.data().begin(), c->frames.data().end());
    coords.insert(coords.end(), c->landmarks.coords.data().begin(), c->landmarks.coords.data().end());
    batch.labels.push_back(c->label);
    batch.clip_ids.push_back(c->clip_id());
    batch.speaker_ids.push_back(c->speaker_id);
  }
  const std::size_t b = clips.size();
  batch.frames = Tensor({b, 1, fs[0], fs[1], fs[2]}, std::move(frames));
  batch.coords = Tensor({b, cs[0], cs[1], cs[2]}, std::move(coords));
  return batch;
}

ClipBatch make_batch(const std::vector<SyntheticClip>& clips, std::size_t begin, std::size_t end) {
  if (begin >= end || end > clips.size()) throw UsageError("make_batch: bad clip range");
  std::vector<const SyntheticClip*> ptrs;
  for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&clips[i]);
  return make_batch(std::span<const SyntheticClip* const>(ptrs));
}

}  // namespace lipdyn
