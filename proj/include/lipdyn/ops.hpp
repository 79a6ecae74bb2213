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

#include <span>
#include <vector>

#include "lipdyn/tensor.hpp"

namespace lipdyn {

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

enum class UnaryOp { kIdentity, kRelu, kSigmoid, kTanh };
enum class BinaryOp { kAdd, kSub, kMul };

/// Elementwise activation. kIdentity returns the input handle unchanged.
Tensor pointwise(const Tensor& x, UnaryOp op);

/// Elementwise binary op with right-aligned (numpy-style) broadcasting.
Tensor pointwise(const Tensor& a, const Tensor& b, BinaryOp op);

inline Tensor relu(const Tensor& x) { return pointwise(x, UnaryOp::kRelu); }
inline Tensor sigmoid(const Tensor& x) { return pointwise(x, UnaryOp::kSigmoid); }
inline Tensor tanh(const Tensor& x) { return pointwise(x, UnaryOp::kTanh); }
inline Tensor add(const Tensor& a, const Tensor& b) { return pointwise(a, b, BinaryOp::kAdd); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return pointwise(a, b, BinaryOp::kSub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return pointwise(a, b, BinaryOp::kMul); }

Tensor scale(const Tensor& x, double factor);

/// Broadcast shape of two shapes, or DimensionError naming both.
Shape broadcast_shapes(const Shape& a, const Shape& b);

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
/// Half-open slice [begin, end) along one axis.
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/// Sum of all entries, as a scalar tensor.
Tensor sum(const Tensor& x);
/// Mean over one axis; the axis is removed.
Tensor mean(const Tensor& x, int axis);
Tensor softmax(const Tensor& x, int axis);

// ---------------------------------------------------------------------------
// Linear algebra and convolutions
// ---------------------------------------------------------------------------

/// Batched matrix product [..,M,K] x [..,K,P] -> [..,M,P]; batch dims
/// broadcast. A rank-1 operand is not promoted.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Dilated temporal convolution on channel-first sequences, zero
/// same-padding: x[B,C,T], kernel[Co,C,k] -> [B,Co,T]. k must be odd.
/// An optional bias[Co] is added to every output position.
Tensor conv1d_temporal(const Tensor& x, const Tensor& kernel, std::size_t dilation,
                       const Tensor& bias = Tensor());

/// Same as conv1d_temporal for channel-last data: x[...,T,C] -> [...,T,Co].
/// Every leading index is an independent sequence.
Tensor conv1d_channels_last(const Tensor& x, const Tensor& kernel, std::size_t dilation,
                            const Tensor& bias = Tensor());

/// Resolution-preserving 3D convolution: x[B,Ci,T,H,W], kernel
/// [Co,Ci,kt,kh,kw] (all odd) -> [B,Co,T,H,W], zero same-padding.
Tensor conv3d_local(const Tensor& x, const Tensor& kernel, const Tensor& bias = Tensor());

/// 2D convolution with zero padding k/2 and the given stride:
/// x[N,C,H,W], kernel[Co,C,kh,kw] (odd) -> [N,Co,ceil(H/s),ceil(W/s)].
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride,
              const Tensor& bias = Tensor());

/// conv2d applied to every frame of a clip volume x[B,C,T,H,W];
/// the result is [B*T, Co, Ho, Wo] with frames ordered b-major.
Tensor conv2d_frames(const Tensor& x, const Tensor& kernel, std::size_t stride,
                     const Tensor& bias = Tensor());

/// Non-overlapping average pooling with a square window that divides H and W.
Tensor avg_pool2d(const Tensor& x, std::size_t window);

/// Picks feature vectors out of a channel-first map.
/// feat[B,C,T,H,W]; cells holds B*N*T flat (h*W + w) indices laid out
/// [b][n][t]. Result is [B,N,T,C]. The adjoint scatters back into feat.
Tensor gather_cells(const Tensor& feat, std::span<const std::size_t> cells, std::size_t nodes);

/// One direction of a GRU over x[B,T,D] with zero initial state.
/// w_ih[3H,D], w_hh[3H,H], b_ih[3H], b_hh[3H]; gate order (reset, update,
/// candidate). Returns hidden states [B,T,H] in input time order; when
/// `reverse` is set the recurrence runs from the last frame to the first.
Tensor gru_scan(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih,
                const Tensor& b_hh, bool reverse);

/// True when every entry is finite.
bool all_finite(const Tensor& t);

}  // namespace lipdyn
