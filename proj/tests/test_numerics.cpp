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

#include <gtest/gtest.h>

#include "lipdyn/errors.hpp"
#include "lipdyn/gradcheck.hpp"
#include "lipdyn/ops.hpp"
#include "lipdyn/tensor.hpp"
#include "oracles.hpp"

namespace lipdyn {
namespace {

using oracle::max_abs_diff;
using oracle::random_tensor;

TEST(Tensor, ConstructionChecksSize) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  const Tensor t = Tensor::full({2, 2}, 3.0);
  EXPECT_EQ(t.numel(), 4u);
  EXPECT_DOUBLE_EQ(t.data()[3], 3.0);
  EXPECT_EQ(t.dim(-1), 2u);
}

TEST(Tensor, CloneIsDetached) {
  Tensor a({2}, {1.0, 2.0}, true);
  Tensor b = a.clone();
  EXPECT_FALSE(b.requires_grad());
  b.mutable_data()[0] = 5.0;
  EXPECT_DOUBLE_EQ(a.data()[0], 1.0);
}

TEST(Autograd, SharedInputAccumulates) {
  Tensor x({3}, {1.0, -2.0, 0.5}, true);
  // y = sum(x*x + x)  ->  dy/dx = 2x + 1
  backward(sum(add(mul(x, x), x)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x.data()[i] + 1.0);
}

TEST(Autograd, NoGradGuardSkipsTape) {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = mul(x, x);
  }
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, BackwardNeedsScalar) {
  Tensor x({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(mul(x, x)), UsageError);
}

TEST(Ops, BroadcastShapes) {
  EXPECT_EQ(broadcast_shapes({2, 3, 4}, {3, 1}), (Shape{2, 3, 4}));
  EXPECT_THROW(broadcast_shapes({2, 3}, {4}), DimensionError);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(3);
  const Tensor s = softmax(random_tensor({4, 7}, rng, -30.0, 30.0), 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) total += s.data()[r * 7 + c];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Ops, PermuteAndReshapeRoundTrip) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({2, 3, 4}, rng);
  const Tensor y = permute(permute(x, {2, 0, 1}), {1, 2, 0});
  EXPECT_EQ(max_abs_diff(x, y), 0.0);
  EXPECT_EQ(max_abs_diff(reshape(reshape(x, {6, 4}), {2, 3, 4}), x), 0.0);
}

TEST(Ops, SliceAndConcatInvert) {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({3, 5}, rng);
  const Tensor y = concat({slice(x, 1, 0, 2), slice(x, 1, 2, 5)}, 1);
  EXPECT_EQ(max_abs_diff(x, y), 0.0);
}

TEST(Ops, MatmulMatchesLoops) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
    EXPECT_LE(max_abs_diff(matmul(a, b), oracle::matmul(a, b)), 1e-12);
  }
}

TEST(Ops, BatchedMatmulBroadcastsRight) {
  std::mt19937_64 rng(7);
  const Tensor a = random_tensor({2, 4, 3}, rng), b = random_tensor({3, 5}, rng);
  const Tensor y = matmul(a, b);
  for (std::size_t i = 0; i < 2; ++i) {
    const Tensor ai = reshape(slice(a, 0, i, i + 1), {4, 3});
    EXPECT_LE(max_abs_diff(reshape(slice(y, 0, i, i + 1), {4, 5}), oracle::matmul(ai, b)), 1e-12);
  }
}

TEST(Ops, Conv1dTemporalMatchesLoops) {
  std::mt19937_64 rng(8);
  for (std::size_t dil : {1u, 2u, 4u}) {
    const Tensor x = random_tensor({2, 3, 11}, rng), k = random_tensor({4, 3, 3}, rng), b = random_tensor({4}, rng);
    EXPECT_LE(max_abs_diff(conv1d_temporal(x, k, dil, b), oracle::conv1d_temporal(x, k, dil, b)), 1e-12);
    EXPECT_LE(max_abs_diff(conv1d_temporal(x, k, dil), oracle::conv1d_temporal(x, k, dil, Tensor())), 1e-12);
  }
}

TEST(Ops, Conv1dChannelsLastMatchesLoops) {
  std::mt19937_64 rng(9);
  for (std::size_t dil : {1u, 3u}) {
    const Tensor x = random_tensor({2, 5, 9, 4}, rng), k = random_tensor({6, 4, 3}, rng), b = random_tensor({6}, rng);
    EXPECT_LE(max_abs_diff(conv1d_channels_last(x, k, dil, b), oracle::conv1d_channels_last(x, k, dil, b)), 1e-12);
  }
}

TEST(Ops, Conv3dMatchesLoops) {
  std::mt19937_64 rng(10);
  // Widths below, at and above the vector tile.
  for (std::size_t w : {5u, 8u, 13u}) {
    const Tensor x = random_tensor({2, 2, 4, 6, w}, rng);
    const Tensor k = random_tensor({9, 2, 3, 5, 5}, rng), b = random_tensor({9}, rng);
    EXPECT_LE(max_abs_diff(conv3d_local(x, k, b), oracle::conv3d_local(x, k, b)), 1e-12);
    EXPECT_LE(max_abs_diff(conv3d_local(x, k), oracle::conv3d_local(x, k, Tensor())), 1e-12);
  }
}

TEST(Ops, Conv2dMatchesLoops) {
  std::mt19937_64 rng(11);
  for (std::size_t stride : {1u, 2u}) {
    const Tensor x = random_tensor({3, 2, 7, 8}, rng), k = random_tensor({4, 2, 3, 3}, rng), b = random_tensor({4}, rng);
    EXPECT_LE(max_abs_diff(conv2d(x, k, stride, b), oracle::conv2d(x, k, stride, b)), 1e-12);
  }
}

TEST(Ops, Conv2dFramesMatchesLoops) {
  std::mt19937_64 rng(12);
  const Tensor x = random_tensor({2, 3, 4, 8, 8}, rng), k = random_tensor({5, 3, 3, 3}, rng), b = random_tensor({5}, rng);
  EXPECT_LE(max_abs_diff(conv2d_frames(x, k, 2, b), oracle::conv2d_frames(x, k, 2, b)), 1e-12);
}

TEST(Ops, ConvRejectsEvenKernels) {
  EXPECT_THROW(conv1d_temporal(Tensor::zeros({1, 1, 5}), Tensor::zeros({1, 1, 2}), 1), ConfigError);
}

TEST(Ops, AvgPoolAveragesWindows) {
  const Tensor x({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor y = avg_pool2d(x, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(y.data()[0], 3.5);
  EXPECT_DOUBLE_EQ(y.data()[1], 5.5);
}

TEST(Ops, GruZeroWeightsGiveHalfCandidateMix) {
  // All-zero weights: r = z = 0.5, candidate tanh(0) = 0, so h stays 0.
  const Tensor x = Tensor::full({1, 4, 2}, 1.0);
  const Tensor y = gru_scan(x, Tensor::zeros({6, 2}), Tensor::zeros({6, 2}), Tensor::zeros({6}), Tensor::zeros({6}), false);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Ops, GruReverseIsTimeMirror) {
  std::mt19937_64 rng(13);
  const Tensor x = random_tensor({2, 5, 3}, rng);
  const Tensor wih = random_tensor({12, 3}, rng), whh = random_tensor({12, 4}, rng);
  const Tensor bih = random_tensor({12}, rng), bhh = random_tensor({12}, rng);
  std::vector<double> flipped(x.numel());
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t d = 0; d < 3; ++d) flipped[(b * 5 + t) * 3 + d] = x.data()[(b * 5 + 4 - t) * 3 + d];
  const Tensor fwd = gru_scan(Tensor({2, 5, 3}, flipped), wih, whh, bih, bhh, false);
  const Tensor rev = gru_scan(x, wih, whh, bih, bhh, true);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t h = 0; h < 4; ++h)
        EXPECT_NEAR(rev.data()[(b * 5 + t) * 4 + h], fwd.data()[(b * 5 + 4 - t) * 4 + h], 1e-12);
}

TEST(Ops, AllFiniteDetectsNan) {
  Tensor t({3}, {1.0, NAN, 2.0});
  EXPECT_FALSE(all_finite(t));
  EXPECT_TRUE(all_finite(Tensor::zeros({3})));
}

TEST(Gradcheck, FlagsWrongGradient) {
  // A correct op passes; a mismatched hand-written adjoint is caught.
  std::mt19937_64 rng(14);
  const Tensor x = random_tensor({4}, rng);
  EXPECT_LT(gradcheck([](const Tensor& v) { return sum(tanh(v)); }, x), 1e-8);
  const auto broken = [](const Tensor& v) {
    Tensor out = Tensor::scalar(0.0);
    for (double e : v.data()) out.mutable_data()[0] += e * e;
    detail::record(out, "broken", {v}, [v](const detail::TensorImpl&) {
      auto g = detail::grad_of(v);
      for (auto& e : g) e += 1.0;
    });
    return out;
  };
  EXPECT_GT(gradcheck(broken, x), 1e-3);
}

}  // namespace
}  // namespace lipdyn
