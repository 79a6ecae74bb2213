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

// Straight-loop reference implementations shared by the unit and
// acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lipdyn/graphs.hpp"
#include "lipdyn/ops.hpp"
#include "lipdyn/tensor.hpp"

namespace lipdyn::oracle {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(shape, std::move(v));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double bias_at(const Tensor& bias, std::size_t o) { return bias.defined() ? bias.data()[o] : 0.0; }

/// [M,K] x [K,P].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  std::vector<double> out(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < k; ++q) s += a.data()[i * k + q] * b.data()[q * p + j];
      out[i * p + j] = s;
    }
  return Tensor({m, p}, std::move(out));
}

/// x[B,C,T], kernel[Co,C,k].
inline Tensor conv1d_temporal(const Tensor& x, const Tensor& kernel, std::size_t dilation, const Tensor& bias) {
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2), Co = kernel.dim(0), k = kernel.dim(2);
  const long half = static_cast<long>(k / 2);
  std::vector<double> out(B * Co * T, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t t = 0; t < T; ++t) {
        double s = bias_at(bias, o);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t j = 0; j < k; ++j) {
            const long src = static_cast<long>(t) + (static_cast<long>(j) - half) * static_cast<long>(dilation);
            if (src < 0 || src >= static_cast<long>(T)) continue;
            s += kernel.data()[(o * C + c) * k + j] * x.data()[(b * C + c) * T + src];
          }
        out[(b * Co + o) * T + t] = s;
      }
  return Tensor({B, Co, T}, std::move(out));
}

/// x[S,T,C] (leading dims flattened by the caller), kernel[Co,C,k].
inline Tensor conv1d_channels_last(const Tensor& x, const Tensor& kernel, std::size_t dilation,
                                   const Tensor& bias) {
  const std::size_t T = x.dim(-2), C = x.dim(-1), S = x.numel() / (T * C);
  const std::size_t Co = kernel.dim(0), k = kernel.dim(2);
  const long half = static_cast<long>(k / 2);
  Shape shape = x.shape();
  shape.back() = Co;
  std::vector<double> out(S * T * Co, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t o = 0; o < Co; ++o) {
        double acc = bias_at(bias, o);
        for (std::size_t j = 0; j < k; ++j) {
          const long src = static_cast<long>(t) + (static_cast<long>(j) - half) * static_cast<long>(dilation);
          if (src < 0 || src >= static_cast<long>(T)) continue;
          for (std::size_t c = 0; c < C; ++c) {
            acc += kernel.data()[(o * C + c) * k + j] * x.data()[(s * T + src) * C + c];
          }
        }
        out[(s * T + t) * Co + o] = acc;
      }
  return Tensor(shape, std::move(out));
}

/// x[B,Ci,T,H,W], kernel[Co,Ci,kt,kh,kw], same padding.
inline Tensor conv3d_local(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const std::size_t B = x.dim(0), Ci = x.dim(1), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::size_t Co = kernel.dim(0), kt = kernel.dim(2), kh = kernel.dim(3), kw = kernel.dim(4);
  std::vector<double> out(B * Co * T * H * W, 0.0);
  auto in = [&](long v, std::size_t n) { return v >= 0 && v < static_cast<long>(n); };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t w = 0; w < W; ++w) {
            double s = bias_at(bias, o);
            for (std::size_t c = 0; c < Ci; ++c)
              for (std::size_t a = 0; a < kt; ++a)
                for (std::size_t p = 0; p < kh; ++p)
                  for (std::size_t q = 0; q < kw; ++q) {
                    const long st = static_cast<long>(t + a) - static_cast<long>(kt / 2);
                    const long sh = static_cast<long>(h + p) - static_cast<long>(kh / 2);
                    const long sw = static_cast<long>(w + q) - static_cast<long>(kw / 2);
                    if (!in(st, T) || !in(sh, H) || !in(sw, W)) continue;
                    s += kernel.data()[(((o * Ci + c) * kt + a) * kh + p) * kw + q] *
                         x.data()[(((b * Ci + c) * T + st) * H + sh) * W + sw];
                  }
            out[(((b * Co + o) * T + t) * H + h) * W + w] = s;
          }
  return Tensor({B, Co, T, H, W}, std::move(out));
}

/// x[N,C,H,W], kernel[Co,C,kh,kw], padding k/2.
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, const Tensor& bias) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t Ho = (H + stride - 1) / stride, Wo = (W + stride - 1) / stride;
  std::vector<double> out(N * Co * Ho * Wo, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double s = bias_at(bias, o);
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t p = 0; p < kh; ++p)
              for (std::size_t q = 0; q < kw; ++q) {
                const long sh = static_cast<long>(i * stride + p) - static_cast<long>(kh / 2);
                const long sw = static_cast<long>(j * stride + q) - static_cast<long>(kw / 2);
                if (sh < 0 || sh >= static_cast<long>(H) || sw < 0 || sw >= static_cast<long>(W)) continue;
                s += kernel.data()[((o * C + c) * kh + p) * kw + q] * x.data()[((n * C + c) * H + sh) * W + sw];
              }
          out[((n * Co + o) * Ho + i) * Wo + j] = s;
        }
  return Tensor({N, Co, Ho, Wo}, std::move(out));
}

/// x[B,C,T,H,W] -> per-frame conv2d stacked b-major.
inline Tensor conv2d_frames(const Tensor& x, const Tensor& kernel, std::size_t stride, const Tensor& bias) {
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  std::vector<double> frames(B * T * C * H * W);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < H * W; ++p)
          frames[((b * T + t) * C + c) * H * W + p] = x.data()[((b * C + c) * T + t) * H * W + p];
  return oracle::conv2d(Tensor({B * T, C, H, W}, std::move(frames)), kernel, stride, bias);
}

/// Per-node neighbourhood sum act(sum_j M_ij sum_c F[b,j,t,c] W[c,:]),
/// f[B,N,T,C], one adjacency per batch entry (or one shared).
inline Tensor sgc(const Tensor& f, std::span<const AdjacencyMatrix> adjacency, const Tensor& w,
                  UnaryOp activation) {
  const std::size_t B = f.dim(0), N = f.dim(1), T = f.dim(2), C = f.dim(3), Co = w.dim(1);
  std::vector<double> out(B * N * T * Co, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const AdjacencyMatrix& m = adjacency.size() == 1 ? adjacency[0] : adjacency[b];
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t o = 0; o < Co; ++o) {
          double s = 0.0;
          for (std::size_t j = 0; j < N; ++j) {
            double proj = 0.0;
            for (std::size_t c = 0; c < C; ++c) proj += f.data()[((b * N + j) * T + t) * C + c] * w.data()[c * Co + o];
            s += m.at(i, j) * proj;
          }
          double& y = out[((b * N + i) * T + t) * Co + o];
          switch (activation) {
            case UnaryOp::kRelu: y = std::max(s, 0.0); break;
            case UnaryOp::kSigmoid: y = 1.0 / (1.0 + std::exp(-s)); break;
            case UnaryOp::kTanh: y = std::tanh(s); break;
            default: y = s; break;
          }
        }
  }
  return Tensor({B, N, T, Co}, std::move(out));
}

/// Random row-stochastic adjacency over n nodes with a sparse pattern.
inline AdjacencyMatrix random_adjacency(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || u(rng) < 0.5) w[i * n + j] = 0.1 + u(rng);
      row += w[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] /= row;
  }
  return {Tensor({n, n}, std::move(w)), GraphKind::kDag, true};
}

}  // namespace lipdyn::oracle
