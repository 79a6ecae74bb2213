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

#include "lipdyn/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lipdyn/errors.hpp"
#include "lipdyn/ops.hpp"

namespace lipdyn {

LipTopology LipTopology::standard() {
  LipTopology t;
  for (std::size_t i = 0; i < 12; ++i) t.outer_ring.push_back(i);
  for (std::size_t i = 12; i < 20; ++i) t.inner_ring.push_back(i);
  t.corner_pairs = {{0, 12}, {6, 16}};
  return t;
}

void LipTopology::validate() const {
  auto check_ring = [](const std::vector<std::size_t>& ring, const char* name) {
    if (ring.size() < 3) {
      throw ConstructionError(std::string(name) + " ring has " + std::to_string(ring.size()) +
                              " nodes; a closed contour needs at least 3");
    }
    if (std::set<std::size_t>(ring.begin(), ring.end()).size() != ring.size()) {
      throw ConstructionError(std::string(name) + " ring repeats a node and does not form a cycle");
    }
  };
  check_ring(outer_ring, "outer");
  check_ring(inner_ring, "inner");
  std::set<std::size_t> all(outer_ring.begin(), outer_ring.end());
  for (auto i : inner_ring) {
    if (!all.insert(i).second) throw ConstructionError("lip rings share node " + std::to_string(i));
  }
  if (*all.rbegin() != all.size() - 1) {
    throw ConstructionError("lip rings do not cover node indices 0.." + std::to_string(all.size() - 1));
  }
  if (corner_pairs.size() != 2) throw ConstructionError("expected two mouth-corner pairs");
  const std::set<std::size_t> outer(outer_ring.begin(), outer_ring.end());
  const std::set<std::size_t> inner(inner_ring.begin(), inner_ring.end());
  for (auto [a, b] : corner_pairs) {
    if (!outer.contains(a) || !inner.contains(b)) {
      throw ConstructionError("corner pair (" + std::to_string(a) + "," + std::to_string(b) +
                              ") must link the outer ring to the inner ring");
    }
  }
}

std::vector<std::size_t> LipTopology::mirror_permutation() const {
  validate();
  std::vector<std::size_t> perm(nodes());
  auto mirror_ring = [&](const std::vector<std::size_t>& ring, std::size_t left, std::size_t right) {
    const auto pos = [&](std::size_t node) {
      return static_cast<std::size_t>(std::find(ring.begin(), ring.end(), node) - ring.begin());
    };
    const std::size_t n = ring.size();
    const std::size_t s = pos(left) + pos(right);
    for (std::size_t k = 0; k < n; ++k) perm[ring[k]] = ring[(s + n - k) % n];
  };
  mirror_ring(outer_ring, corner_pairs[0].first, corner_pairs[1].first);
  mirror_ring(inner_ring, corner_pairs[0].second, corner_pairs[1].second);
  return perm;
}

void LandmarkSequence::validate() const {
  if (!coords.defined() || coords.rank() != 3 || coords.dim(1) != kLipNodes || coords.dim(2) != 2) {
    throw DataError("clip '" + clip_id + "': landmarks must be [T,20,2], got " +
                    (coords.defined() ? shape_str(coords.shape()) : std::string("<none>")));
  }
  if (coords.dim(0) < 3) {
    throw DataError("clip '" + clip_id + "': need at least 3 frames, got " +
                    std::to_string(coords.dim(0)));
  }
  for (double v : coords.data()) {
    if (!std::isfinite(v) || v < 0.0 || v >= frame_size) {
      throw DataError("clip '" + clip_id + "': landmark coordinate " + std::to_string(v) +
                      " outside crop [0," + std::to_string(frame_size) + ")");
    }
  }
}

std::string_view to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::kLcg:
      return "lcg";
    case GraphKind::kDag:
      return "dag";
    case GraphKind::kSag:
      return "sag";
  }
  return "?";
}

AdjacencyMatrix build_lcg(const LipTopology& topology) {
  topology.validate();
  const std::size_t n = topology.nodes();
  std::vector<double> w(n * n, 0.0);
  auto link = [&](std::size_t a, std::size_t b) {
    w[a * n + b] = 1.0;
    w[b * n + a] = 1.0;
  };
  for (const auto* ring : {&topology.outer_ring, &topology.inner_ring}) {
    for (std::size_t k = 0; k < ring->size(); ++k) link((*ring)[k], (*ring)[(k + 1) % ring->size()]);
  }
  for (auto [a, b] : topology.corner_pairs) link(a, b);
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;
  return {Tensor({n, n}, std::move(w)), GraphKind::kLcg, false};
}

AdjacencyMatrix dag_weights(const Tensor& coords, double epsilon, std::string_view clip_id) {
  if (coords.rank() != 3 || coords.dim(2) != 2 || coords.dim(1) < 2) {
    throw DimensionError("build_dag expects coords [T,N,2], got " + shape_str(coords.shape()));
  }
  if (!(epsilon > 0.0)) throw ConfigError("DAG epsilon must be positive");
  const std::size_t t_len = coords.dim(0);
  const std::size_t n = coords.dim(1);
  const auto c = coords.data();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* p = c.data() + t * n * 2;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = std::hypot(p[2 * i] - p[2 * j], p[2 * i + 1] - p[2 * j + 1]);
        dist[i * n + j] += d;
        dist[j * n + i] += d;
      }
    }
  }
  double max_dist = 0.0;
  for (auto& d : dist) {
    d /= static_cast<double>(t_len);
    max_dist = std::max(max_dist, d);
  }
  if (max_dist < 1e-9) {
    throw ConstructionError("clip '" + std::string(clip_id) +
                            "': all landmarks coincide; distance-aware graph is degenerate");
  }
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      w[i * n + j] = 1.0 / (dist[i * n + j] + epsilon);
      row_max = std::max(row_max, w[i * n + j]);
    }
    w[i * n + i] = row_max;
  }
  return {Tensor({n, n}, std::move(w)), GraphKind::kDag, false};
}

AdjacencyMatrix build_dag(const Tensor& coords, double epsilon, std::string_view clip_id) {
  return normalize_adjacency(dag_weights(coords, epsilon, clip_id));
}

Tensor cosine_similarity(const Tensor& node_feats) {
  if (node_feats.rank() != 2) {
    throw DimensionError("cosine similarity expects [N,C], got " + shape_str(node_feats.shape()));
  }
  const std::size_t n = node_feats.dim(0);
  const std::size_t c = node_feats.dim(1);
  const auto f = node_feats.data();
  std::vector<double> norm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += f[i * c + k] * f[i * c + k];
    norm[i] = std::sqrt(s);
    if (!(norm[i] > 0.0)) {
      throw ConstructionError("similarity-aware graph: node " + std::to_string(i) +
                              " has a zero-norm feature vector");
    }
  }
  std::vector<double> sim(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    sim[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < c; ++k) dot += f[i * c + k] * f[j * c + k];
      const double v = dot / (norm[i] * norm[j]);
      sim[i * n + j] = v;
      sim[j * n + i] = v;
    }
  }
  return Tensor({n, n}, std::move(sim));
}

AdjacencyMatrix sag_weights(const Tensor& node_feats) {
  Tensor sim = cosine_similarity(node_feats);
  const std::size_t n = sim.dim(0);
  auto w = sim.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] = i == j ? 1.0 : std::max(0.0, w[i * n + j]);
  }
  return {sim, GraphKind::kSag, false};
}

AdjacencyMatrix build_sag(const Tensor& node_feats) {
  return normalize_adjacency(sag_weights(node_feats));
}

AdjacencyMatrix normalize_adjacency(const AdjacencyMatrix& m) {
  const std::size_t n = m.nodes();
  if (m.weights.rank() != 2 || m.weights.dim(1) != n) {
    throw DimensionError("adjacency must be square, got " + shape_str(m.weights.shape()));
  }
  std::vector<double> w(m.weights.data().begin(), m.weights.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = w[i * n + j];
      if (!(v >= 0.0)) {
        throw ConstructionError(std::string(to_string(m.kind)) + " adjacency has a negative entry in row " +
                                std::to_string(i));
      }
      s += v;
    }
    if (!(s > 0.0)) {
      throw ConstructionError(std::string(to_string(m.kind)) + " adjacency row " + std::to_string(i) +
                              " sums to zero");
    }
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] /= s;
  }
  return {Tensor({n, n}, std::move(w)), m.kind, true};
}

std::size_t nearest_cell(double coord, double frame_size, std::size_t extent) {
  const double scaled = coord * static_cast<double>(extent) / frame_size;
  const double r = std::floor(scaled + 0.5);
  if (r <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(r), extent - 1);
}

Tensor sample_node_features(const Tensor& feat_map, const Tensor& coords, double frame_size) {
  if (feat_map.rank() != 5) {
    throw DimensionError("feature map must be [B,C,T,H,W], got " + shape_str(feat_map.shape()));
  }
  const std::size_t batch = feat_map.dim(0);
  const std::size_t t_len = feat_map.dim(2);
  const std::size_t h = feat_map.dim(3);
  const std::size_t w = feat_map.dim(4);
  const bool shared = coords.rank() == 3;
  if (!(shared || coords.rank() == 4) || coords.dim(-1) != 2 || coords.dim(-3) != t_len ||
      (!shared && coords.dim(0) != batch)) {
    throw DimensionError("landmark coords " + shape_str(coords.shape()) +
                         " incompatible with feature map " + shape_str(feat_map.shape()));
  }
  const std::size_t nodes = coords.dim(-2);
  const auto c = coords.data();
  constexpr double kTolerance = 1.0;
  std::vector<std::size_t> cells(batch * nodes * t_len);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* base = c.data() + (shared ? 0 : b * t_len * nodes * 2);
    for (std::size_t n = 0; n < nodes; ++n) {
      for (std::size_t t = 0; t < t_len; ++t) {
        const double x = base[(t * nodes + n) * 2];
        const double y = base[(t * nodes + n) * 2 + 1];
        if (!std::isfinite(x) || !std::isfinite(y) || x < -kTolerance || y < -kTolerance ||
            x >= frame_size + kTolerance || y >= frame_size + kTolerance) {
          throw DataError("landmark (" + std::to_string(x) + "," + std::to_string(y) +
                          ") lies outside the " + std::to_string(frame_size) + "px crop");
        }
        cells[(b * nodes + n) * t_len + t] = nearest_cell(y, frame_size, h) * w + nearest_cell(x, frame_size, w);
      }
    }
  }
  return gather_cells(feat_map, cells, nodes);
}

Tensor time_mean_node_features(const Tensor& nodes, std::size_t batch_index) {
  if (nodes.rank() != 4 || batch_index >= nodes.dim(0)) {
    throw DimensionError("node features must be [B,N,T,C], got " + shape_str(nodes.shape()));
  }
  const std::size_t n = nodes.dim(1);
  const std::size_t t_len = nodes.dim(2);
  const std::size_t c = nodes.dim(3);
  const auto d = nodes.data();
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < t_len; ++t) {
      const double* src = d.data() + ((batch_index * n + i) * t_len + t) * c;
      for (std::size_t k = 0; k < c; ++k) out[i * c + k] += src[k];
    }
  }
  for (auto& v : out) v /= static_cast<double>(t_len);
  return Tensor({n, c}, std::move(out));
}

}  // namespace lipdyn
