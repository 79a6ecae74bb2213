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
#include <string_view>
#include <utility>
#include <vector>

#include "lipdyn/tensor.hpp"

namespace lipdyn {

inline constexpr std::size_t kLipNodes = 20;

/// Node order of the 20-point lip contour.
///
///   outer ring  0..11  0 = left corner, 1..5 upper lip left to right,
///                      6 = right corner, 7..11 lower lip right to left
///   inner ring 12..19  12 = left corner, 13..15 upper, 16 = right corner,
///                      17..19 lower right to left
///
/// This is the order of points 48..67 of the common 68-point face layout.
struct LipTopology {
  std::vector<std::size_t> outer_ring;
  std::vector<std::size_t> inner_ring;
  std::vector<std::pair<std::size_t, std::size_t>> corner_pairs;

  static LipTopology standard();

  /// Throws ConstructionError unless the rings are disjoint closed cycles
  /// covering 0..N-1 and every corner pair links the two rings.
  void validate() const;
  std::size_t nodes() const { return outer_ring.size() + inner_ring.size(); }

  /// Node index each landmark maps to under a horizontal mirror.
  std::vector<std::size_t> mirror_permutation() const;
};

/// Per-clip landmark track, coords[T,20,2] as (x, y) pixels of the crop.
struct LandmarkSequence {
  Tensor coords;
  std::string clip_id;
  std::string speaker_id;
  int label = 0;
  double frame_size = 16.0;

  std::size_t frames() const { return coords.dim(0); }
  /// Throws DataError on wrong node count, T < 3, or points outside the crop.
  void validate() const;
};

enum class GraphKind { kLcg, kDag, kSag };
std::string_view to_string(GraphKind kind);

struct AdjacencyMatrix {
  Tensor weights;  // [N,N]
  GraphKind kind = GraphKind::kLcg;
  bool normalized = false;

  std::size_t nodes() const { return weights.dim(0); }
  double at(std::size_t i, std::size_t j) const { return weights.data()[i * nodes() + j]; }
};

/// Unweighted contour graph: ring neighbours, self-loops, corner cross links.
/// Not normalized.
AdjacencyMatrix build_lcg(const LipTopology& topology);

inline constexpr double kDagEpsilon = 1e-3;

/// Distance-aware weights before normalization: 1/(mean_t |p_i - p_j| + eps)
/// off the diagonal, the row's largest off-diagonal weight on it.
AdjacencyMatrix dag_weights(const Tensor& coords, double epsilon = kDagEpsilon,
                            std::string_view clip_id = {});
/// Row-normalized distance-aware graph.
AdjacencyMatrix build_dag(const Tensor& coords, double epsilon = kDagEpsilon,
                          std::string_view clip_id = {});

/// Pairwise cosine similarity of node_feats[N,C] rows, unclamped.
Tensor cosine_similarity(const Tensor& node_feats);
/// Similarity-aware weights before normalization: clamped cosine off the
/// diagonal, 1 on it.
AdjacencyMatrix sag_weights(const Tensor& node_feats);
/// Row-normalized similarity-aware graph.
AdjacencyMatrix build_sag(const Tensor& node_feats);

/// Divides each row by its sum. Idempotent on row-stochastic input.
AdjacencyMatrix normalize_adjacency(const AdjacencyMatrix& m);

/// Feature-map cell nearest to a pixel coordinate: linear rescale to the
/// map extent, round half up, clamp to [0, extent).
std::size_t nearest_cell(double coord, double frame_size, std::size_t extent);

/// Looks up the feature vector under every landmark.
/// feat_map[B,C,T,H,W]; coords [T,N,2] (shared by the batch) or [B,T,N,2].
/// Returns [B,N,T,C]; differentiable with respect to feat_map.
Tensor sample_node_features(const Tensor& feat_map, const Tensor& coords, double frame_size);

/// Mean over time of one batch entry of node features [B,N,T,C] -> [N,C].
/// Values only; not taped.
Tensor time_mean_node_features(const Tensor& nodes, std::size_t batch_index);

}  // namespace lipdyn
