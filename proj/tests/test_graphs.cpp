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

#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "lipdyn/errors.hpp"
#include "lipdyn/graphs.hpp"
#include "lipdyn/ops.hpp"
#include "lipdyn/synth.hpp"
#include "oracles.hpp"

namespace lipdyn {
namespace {

std::size_t degree(const AdjacencyMatrix& m, std::size_t i) {
  std::size_t d = 0;
  for (std::size_t j = 0; j < m.nodes(); ++j) d += m.at(i, j) != 0.0;
  return d;
}

TEST(Topology, StandardIsValid) {
  const LipTopology t = LipTopology::standard();
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(t.nodes(), kLipNodes);
}

TEST(Topology, RejectsOverlappingRings) {
  LipTopology t = LipTopology::standard();
  t.inner_ring[0] = t.outer_ring[0];
  EXPECT_THROW(t.validate(), ConstructionError);
}

TEST(Topology, MirrorIsInvolution) {
  const auto p = LipTopology::standard().mirror_permutation();
  ASSERT_EQ(p.size(), kLipNodes);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[p[i]], i);
  EXPECT_EQ(p[0], 6u);
  EXPECT_EQ(p[12], 16u);
}

TEST(Lcg, DegreesBetweenThreeAndFive) {
  const AdjacencyMatrix m = build_lcg(LipTopology::standard());
  EXPECT_FALSE(m.normalized);
  for (std::size_t i = 0; i < m.nodes(); ++i) {
    EXPECT_GE(degree(m, i), 3u);
    EXPECT_LE(degree(m, i), 5u);
    EXPECT_EQ(m.at(i, i), 1.0);
    for (std::size_t j = 0; j < m.nodes(); ++j) EXPECT_EQ(m.at(i, j), m.at(j, i));
  }
}

TEST(Lcg, CornersLinkRings) {
  const AdjacencyMatrix m = build_lcg(LipTopology::standard());
  EXPECT_EQ(m.at(0, 12), 1.0);
  EXPECT_EQ(m.at(6, 16), 1.0);
  EXPECT_EQ(m.at(1, 13), 0.0);
}

Tensor two_frame_coords(std::mt19937_64& rng) {
  return oracle::random_tensor({2, kLipNodes, 2}, rng, 1.0, 15.0);
}

TEST(Dag, WeightsInverseToMeanDistance) {
  std::mt19937_64 rng(1);
  const Tensor c = two_frame_coords(rng);
  const AdjacencyMatrix w = dag_weights(c);
  for (std::size_t i = 0; i < kLipNodes; ++i) {
    for (std::size_t j = 0; j < kLipNodes; ++j) {
      if (i == j) continue;
      double d = 0.0;
      for (std::size_t t = 0; t < 2; ++t) {
        const double* p = c.data().data() + t * kLipNodes * 2;
        d += std::hypot(p[2 * i] - p[2 * j], p[2 * i + 1] - p[2 * j + 1]);
      }
      EXPECT_NEAR(w.at(i, j), 1.0 / (d / 2.0 + kDagEpsilon), 1e-12);
    }
  }
}

TEST(Dag, DiagonalIsRowMaximum) {
  std::mt19937_64 rng(2);
  const AdjacencyMatrix w = dag_weights(two_frame_coords(rng));
  for (std::size_t i = 0; i < kLipNodes; ++i) {
    double best = 0.0;
    for (std::size_t j = 0; j < kLipNodes; ++j) {
      if (j != i) best = std::max(best, w.at(i, j));
    }
    EXPECT_EQ(w.at(i, i), best);
  }
}

TEST(Dag, NormalizedRowsSumToOne) {
  std::mt19937_64 rng(3);
  const AdjacencyMatrix m = build_dag(two_frame_coords(rng));
  EXPECT_TRUE(m.normalized);
  for (std::size_t i = 0; i < kLipNodes; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < kLipNodes; ++j) s += m.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Sag, CosineSymmetricAndScaleInvariant) {
  std::mt19937_64 rng(4);
  const Tensor x = oracle::random_tensor({kLipNodes, 6}, rng);
  Tensor scaled = x.clone();
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (std::size_t i = 0; i < kLipNodes; ++i) {
    const double s = u(rng);
    for (std::size_t c = 0; c < 6; ++c) scaled.mutable_data()[i * 6 + c] *= s;
  }
  const Tensor a = cosine_similarity(x), b = cosine_similarity(scaled);
  for (std::size_t i = 0; i < kLipNodes; ++i)
    for (std::size_t j = 0; j < kLipNodes; ++j) {
      EXPECT_NEAR(a.data()[i * kLipNodes + j], a.data()[j * kLipNodes + i], 1e-12);
      EXPECT_NEAR(a.data()[i * kLipNodes + j], b.data()[i * kLipNodes + j], 1e-12);
    }
}

TEST(Sag, ClampsNegativeSimilarity) {
  // Two opposite nodes plus copies: cosine -1 must become 0.
  std::vector<double> v(kLipNodes * 2);
  for (std::size_t i = 0; i < kLipNodes; ++i) {
    v[2 * i] = i % 2 ? -1.0 : 1.0;
    v[2 * i + 1] = 0.0;
  }
  const AdjacencyMatrix w = sag_weights(Tensor({kLipNodes, 2}, v));
  EXPECT_EQ(w.at(0, 1), 0.0);
  EXPECT_NEAR(w.at(0, 2), 1.0, 1e-12);
  EXPECT_EQ(w.at(3, 3), 1.0);
}

TEST(Normalize, IdempotentOnStochastic) {
  std::mt19937_64 rng(5);
  const AdjacencyMatrix m = build_dag(two_frame_coords(rng));
  const AdjacencyMatrix again = normalize_adjacency(m);
  EXPECT_LE(oracle::max_abs_diff(m.weights, again.weights), 1e-15);
}

TEST(Normalize, ZeroRowIsAnError) {
  AdjacencyMatrix m{Tensor::zeros({3, 3}), GraphKind::kSag, false};
  EXPECT_THROW(normalize_adjacency(m), ConstructionError);
}

TEST(NearestCell, RescalesAndClamps) {
  EXPECT_EQ(nearest_cell(0.0, 16.0, 16), 0u);
  EXPECT_EQ(nearest_cell(15.0, 16.0, 16), 15u);
  EXPECT_EQ(nearest_cell(7.5, 16.0, 8), 4u);
  EXPECT_EQ(nearest_cell(100.0, 16.0, 8), 7u);
  EXPECT_EQ(nearest_cell(-3.0, 16.0, 8), 0u);
}

TEST(SampleNodes, PicksCellUnderLandmark) {
  // Feature value encodes its cell, so the sample reveals the cell index.
  const std::size_t H = 4, W = 4;
  std::vector<double> f(H * W);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(i);
  const Tensor feat({1, 1, 1, H, W}, f);
  std::vector<double> coords(kLipNodes * 2, 0.0);
  coords[0] = 3.0;  // x
  coords[1] = 1.0;  // y
  const Tensor nodes = sample_node_features(feat, Tensor({1, kLipNodes, 2}, coords), 4.0);
  EXPECT_EQ(nodes.shape(), (Shape{1, kLipNodes, 1, 1}));
  EXPECT_EQ(nodes.data()[0], 1.0 * W + 3.0);
  EXPECT_EQ(nodes.data()[1], 0.0);
}

TEST(LandmarkSequence, ValidateRejectsOutOfCrop) {
  LandmarkSequence s;
  s.coords = Tensor::full({3, kLipNodes, 2}, 5.0);
  EXPECT_NO_THROW(s.validate());
  s.coords.mutable_data()[4] = 40.0;
  EXPECT_THROW(s.validate(), DataError);
  s.coords = Tensor::full({2, kLipNodes, 2}, 5.0);
  EXPECT_THROW(s.validate(), DataError);
}

TEST(Graphs, InvariantsOnSyntheticClips) {
  const Dataset ds = generate_dataset(3, 3, 2, 11);
  for (const auto& clip : ds.train) {
    const AdjacencyMatrix dag = build_dag(clip.landmarks.coords);
    for (std::size_t i = 0; i < kLipNodes; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < kLipNodes; ++j) s += dag.at(i, j);
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

}  // namespace
}  // namespace lipdyn
