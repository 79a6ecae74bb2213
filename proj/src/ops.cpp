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

#include "lipdyn/ops.hpp"

// Every product goes through the packed kernels, whose summation order does
// not depend on buffer addresses.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <cmath>
#include <numeric>

#include "lipdyn/errors.hpp"

namespace lipdyn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

MapMat as_mat(std::span<double> s, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MapMat(s.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
CMapMat as_mat(std::span<const double> s, std::size_t rows, std::size_t cols,
               std::size_t offset = 0) {
  return CMapMat(s.data() + offset, static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(cols));
}

std::size_t norm_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

/// Strides of `in` viewed inside the broadcast shape `out` (0 on broadcast dims).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t lead = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[lead + i] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

/// Visits every output index with the matching offsets into both operands.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t r = out.size();
  const std::size_t n = shape_numel(out);
  if (r == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(r, 0);
  const std::size_t inner = out[r - 1];
  const std::size_t ia = sa[r - 1];
  const std::size_t ib = sb[r - 1];
  std::size_t oa = 0;
  std::size_t ob = 0;
  for (std::size_t i = 0; i < n; i += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(i + j, oa + j * ia, ob + j * ib);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

void require_odd(std::size_t k, const char* what) {
  if (k % 2 == 0) {
    throw ConfigError(std::string(what) + " kernel extent must be odd, got " + std::to_string(k));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor pointwise(const Tensor& x, UnaryOp op) {
  if (op == UnaryOp::kIdentity) return x;
  const auto in = x.data();
  std::vector<double> out(in.size());
  switch (op) {
    case UnaryOp::kRelu:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case UnaryOp::kSigmoid:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
      break;
    case UnaryOp::kTanh:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
      break;
    case UnaryOp::kIdentity:
      break;
  }
  Tensor y(x.shape(), std::move(out));
  if (detail::needs_grad({&x})) {
    const char* name = op == UnaryOp::kRelu ? "relu" : op == UnaryOp::kSigmoid ? "sigmoid" : "tanh";
    detail::record(y, name, {x}, [x, op](const detail::TensorImpl& o) {
      if (!x.requires_grad()) return;
      auto gx = detail::grad_of(x);
      const auto xin = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double g = o.grad[i];
        switch (op) {
          case UnaryOp::kRelu:
            if (xin[i] > 0.0) gx[i] += g;
            break;
          case UnaryOp::kSigmoid:
            gx[i] += g * o.data[i] * (1.0 - o.data[i]);
            break;
          case UnaryOp::kTanh:
            gx[i] += g * (1.0 - o.data[i] * o.data[i]);
            break;
          case UnaryOp::kIdentity:
            break;
        }
      }
    });
  }
  return y;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

Tensor pointwise(const Tensor& a, const Tensor& b, BinaryOp op) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  std::vector<double> out(shape_numel(out_shape));
  const auto da = a.data();
  const auto db = b.data();
  const bool same = a.shape() == b.shape();
  std::vector<std::size_t> sa;
  std::vector<std::size_t> sb;
  if (same) {
    switch (op) {
      case BinaryOp::kAdd:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
        break;
      case BinaryOp::kSub:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
        break;
      case BinaryOp::kMul:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
        break;
    }
  } else {
    sa = broadcast_strides(a.shape(), out_shape);
    sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      switch (op) {
        case BinaryOp::kAdd:
          out[i] = da[ia] + db[ib];
          break;
        case BinaryOp::kSub:
          out[i] = da[ia] - db[ib];
          break;
        case BinaryOp::kMul:
          out[i] = da[ia] * db[ib];
          break;
      }
    });
  }
  Tensor y(out_shape, std::move(out));
  if (detail::needs_grad({&a, &b})) {
    const char* name = op == BinaryOp::kAdd ? "add" : op == BinaryOp::kSub ? "sub" : "mul";
    detail::record(y, name, {a, b}, [a, b, op, same, sa, sb](const detail::TensorImpl& o) {
      const bool wa = a.requires_grad();
      const bool wb = b.requires_grad();
      std::span<double> ga = wa ? detail::grad_of(a) : std::span<double>();
      std::span<double> gb = wb ? detail::grad_of(b) : std::span<double>();
      const auto da = a.data();
      const auto db = b.data();
      auto visit = [&](std::size_t i, std::size_t ia, std::size_t ib) {
        const double g = o.grad[i];
        switch (op) {
          case BinaryOp::kAdd:
            if (wa) ga[ia] += g;
            if (wb) gb[ib] += g;
            break;
          case BinaryOp::kSub:
            if (wa) ga[ia] += g;
            if (wb) gb[ib] -= g;
            break;
          case BinaryOp::kMul:
            if (wa) ga[ia] += g * db[ib];
            if (wb) gb[ib] += g * da[ia];
            break;
        }
      };
      if (same) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) visit(i, i, i);
      } else {
        for_each_broadcast(o.shape, sa, sb, visit);
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  Tensor y(x.shape(), std::move(out));
  if (detail::needs_grad({&x})) {
    detail::record(y, "scale", {x}, [x, factor](const detail::TensorImpl& o) {
      auto gx = detail::grad_of(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * o.grad[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor y(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (detail::needs_grad({&x})) {
    detail::record(y, "reshape", {x}, [x](const detail::TensorImpl& o) {
      auto gx = detail::grad_of(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
    });
  }
  return y;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& in = x.shape();
  const std::size_t r = in.size();
  if (order.size() != r) {
    throw DimensionError("permute order rank " + std::to_string(order.size()) +
                         " does not match shape " + shape_str(in));
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_strides(r);
  std::vector<bool> seen(r, false);
  for (std::size_t i = 0; i < r; ++i) {
    if (order[i] >= r || seen[order[i]]) throw DimensionError("invalid permutation");
    seen[order[i]] = true;
    out_shape[i] = in[order[i]];
    src_strides[i] = in_strides[order[i]];
  }
  std::vector<double> out(x.numel());
  const auto src = x.data();
  const std::vector<std::size_t> unit(r, 0);
  for_each_broadcast(out_shape, src_strides, unit,
                     [&](std::size_t i, std::size_t s, std::size_t) { out[i] = src[s]; });
  Tensor y(out_shape, std::move(out));
  if (detail::needs_grad({&x})) {
    detail::record(y, "permute", {x}, [x, src_strides, unit](const detail::TensorImpl& o) {
      auto gx = detail::grad_of(x);
      for_each_broadcast(o.shape, src_strides, unit,
                         [&](std::size_t i, std::size_t s, std::size_t) { gx[s] += o.grad[i]; });
    });
  }
  return y;
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  const std::size_t ax = norm_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == ax || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat shape mismatch: " + shape_str(first) + " vs " + shape_str(s));
    }
    out_shape[ax] += s[ax];
  }
  const std::size_t outer = prod(first, 0, ax);
  const std::size_t inner = prod(first, ax + 1, first.size());
  const std::size_t out_row = out_shape[ax] * inner;
  std::vector<double> out(shape_numel(out_shape));
  std::size_t col = 0;
  std::vector<std::size_t> cols;
  for (const auto& p : parts) {
    cols.push_back(col);
    const std::size_t w = p.shape()[ax] * inner;
    const auto d = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + col));
    }
    col += w;
  }
  Tensor y(out_shape, std::move(out));
  if (detail::needs_grad(parts)) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    detail::record(y, "concat", inputs,
                   [inputs, cols, outer, inner, ax, out_row](const detail::TensorImpl& o) {
                     for (std::size_t k = 0; k < inputs.size(); ++k) {
                       if (!inputs[k].requires_grad()) continue;
                       auto g = detail::grad_of(inputs[k]);
                       const std::size_t w = inputs[k].shape()[ax] * inner;
                       for (std::size_t r = 0; r < outer; ++r) {
                         for (std::size_t j = 0; j < w; ++j) {
                           g[r * w + j] += o.grad[r * out_row + cols[k] + j];
                         }
                       }
                     }
                   });
  }
  return y;
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  const std::size_t ax = norm_axis(axis, s.size());
  if (begin > end || end > s[ax]) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for shape " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[ax] = end - begin;
  const std::size_t outer = prod(s, 0, ax);
  const std::size_t inner = prod(s, ax + 1, s.size());
  const std::size_t in_row = s[ax] * inner;
  const std::size_t w = (end - begin) * inner;
  const std::size_t off = begin * inner;
  std::vector<double> out(outer * w);
  const auto d = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * in_row + off), w,
                out.begin() + static_cast<std::ptrdiff_t>(o * w));
  }
  Tensor y(out_shape, std::move(out));
  if (detail::needs_grad({&x})) {
    detail::record(y, "slice", {x}, [x, outer, in_row, w, off](const detail::TensorImpl& o) {
      auto g = detail::grad_of(x);
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t j = 0; j < w; ++j) g[r * in_row + off + j] += o.grad[r * w + j];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  const auto d = x.data();
  Tensor y = Tensor::scalar(std::accumulate(d.begin(), d.end(), 0.0));
  if (detail::needs_grad({&x})) {
    detail::record(y, "sum", {x}, [x](const detail::TensorImpl& o) {
      auto g = detail::grad_of(x);
      for (auto& v : g) v += o.grad[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  const std::size_t ax = norm_axis(axis, s.size());
  const std::size_t outer = prod(s, 0, ax);
  const std::size_t len = s[ax];
  const std::size_t inner = prod(s, ax + 1, s.size());
  if (len == 0) throw UsageError("mean over empty axis");
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  std::vector<double> out(outer * inner, 0.0);
  const auto d = x.data();
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const double* src = d.data() + (o * len + l) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  for (auto& v : out) v *= inv;
  Tensor y(out_shape, std::move(out));
  if (detail::needs_grad({&x})) {
    detail::record(y, "mean", {x}, [x, outer, len, inner, inv](const detail::TensorImpl& o) {
      auto g = detail::grad_of(x);
      for (std::size_t a = 0; a < outer; ++a) {
        for (std::size_t l = 0; l < len; ++l) {
          for (std::size_t i = 0; i < inner; ++i) {
            g[(a * len + l) * inner + i] += o.grad[a * inner + i] * inv;
          }
        }
      }
    });
  }
  return y;
}

Tensor softmax(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  const std::size_t ax = norm_axis(axis, s.size());
  const std::size_t outer = prod(s, 0, ax);
  const std::size_t len = s[ax];
  const std::size_t inner = prod(s, ax + 1, s.size());
  const auto d = x.data();
  std::vector<double> out(d.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = -INFINITY;
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, d[base + l * inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(d[base + l * inner] - mx);
        out[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= z;
    }
  }
  Tensor y(s, std::move(out));
  if (detail::needs_grad({&x})) {
    detail::record(y, "softmax", {x}, [x, outer, len, inner](const detail::TensorImpl& o) {
      auto g = detail::grad_of(x);
      for (std::size_t a = 0; a < outer; ++a) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = a * len * inner + i;
          double dot = 0.0;
          for (std::size_t l = 0; l < len; ++l) {
            dot += o.grad[base + l * inner] * o.data[base + l * inner];
          }
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t k = base + l * inner;
            g[k] += o.data[k] * (o.grad[k] - dot);
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw DimensionError("matmul shape mismatch: " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa[sa.size() - 1];
  const std::size_t p = sb[sb.size() - 1];
  const Shape ba(sa.begin(), sa.end() - 2);
  const Shape bb(sb.begin(), sb.end() - 2);
  Shape batch;
  try {
    batch = broadcast_shapes(ba, bb);
  } catch (const DimensionError&) {
    throw DimensionError("matmul batch dims not broadcastable: " + shape_str(sa) + " x " +
                         shape_str(sb));
  }
  // Pairs of matrix indices (into a, into b) for every output batch entry.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(shape_numel(batch));
  for_each_broadcast(batch, broadcast_strides(ba, batch), broadcast_strides(bb, batch),
                     [&](std::size_t, std::size_t ia, std::size_t ib) { pairs.emplace_back(ia, ib); });
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(p);
  std::vector<double> out(shape_numel(out_shape));
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    as_mat(std::span<double>(out), m, p, i * m * p).noalias() =
        as_mat(da, m, k, pairs[i].first * m * k) * as_mat(db, k, p, pairs[i].second * k * p);
  }
  Tensor y(out_shape, std::move(out));
  if (detail::needs_grad({&a, &b})) {
    detail::record(y, "matmul", {a, b}, [a, b, pairs, m, k, p](const detail::TensorImpl& o) {
      const std::span<const double> g(o.grad);
      if (a.requires_grad()) {
        auto ga = detail::grad_of(a);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          as_mat(ga, m, k, pairs[i].first * m * k).noalias() +=
              as_mat(g, m, p, i * m * p) * as_mat(b.data(), k, p, pairs[i].second * k * p).transpose();
        }
      }
      if (b.requires_grad()) {
        auto gb = detail::grad_of(b);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          as_mat(gb, k, p, pairs[i].second * k * p).noalias() +=
              as_mat(a.data(), m, k, pairs[i].first * m * k).transpose() * as_mat(g, m, p, i * m * p);
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Temporal convolution
// ---------------------------------------------------------------------------

namespace {

void check_bias(const Tensor& bias, std::size_t co, const char* what) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) {
    throw DimensionError(std::string(what) + " bias must be [" + std::to_string(co) + "], got " +
                         shape_str(bias.shape()));
  }
}

/// Adds bias[o] to every element of channel o, where out is laid out as
/// `outer` blocks of [co, inner].
void add_bias(std::span<double> out, const Tensor& bias, std::size_t outer, std::size_t co,
              std::size_t inner) {
  const auto bd = bias.data();
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t o = 0; o < co; ++o) {
      double* p = out.data() + (a * co + o) * inner;
      const double v = bd[o];
      for (std::size_t i = 0; i < inner; ++i) p[i] += v;
    }
  }
}

void bias_grad(std::span<const double> g, const Tensor& bias, std::size_t outer, std::size_t co,
               std::size_t inner) {
  auto gb = detail::grad_of(bias);
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t o = 0; o < co; ++o) {
      const double* p = g.data() + (a * co + o) * inner;
      double acc = 0.0;
      for (std::size_t i = 0; i < inner; ++i) acc += p[i];
      gb[o] += acc;
    }
  }
}

struct Conv1dGeom {
  std::size_t seqs, t_len, c, co, ks, dilation;
  std::size_t rows() const { return seqs * t_len; }
  std::ptrdiff_t offset(std::size_t j) const {
    return (static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(ks / 2)) *
           static_cast<std::ptrdiff_t>(dilation);
  }
};

/// cols[rows, ks*c]: column block j holds x shifted by tap j's offset.
void im2col1d(const double* x, const Conv1dGeom& g, RowMat& cols) {
  const std::size_t width = g.ks * g.c;
  cols.resize(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(width));
  const auto T = static_cast<std::ptrdiff_t>(g.t_len);
  for (std::size_t s = 0; s < g.seqs; ++s) {
    for (std::ptrdiff_t t = 0; t < T; ++t) {
      double* dst = cols.data() + (s * g.t_len + static_cast<std::size_t>(t)) * width;
      for (std::size_t j = 0; j < g.ks; ++j, dst += g.c) {
        const std::ptrdiff_t st = t + g.offset(j);
        if (st < 0 || st >= T) {
          std::fill_n(dst, g.c, 0.0);
        } else {
          std::copy_n(x + (s * g.t_len + static_cast<std::size_t>(st)) * g.c, g.c, dst);
        }
      }
    }
  }
}

void col2im1d(const RowMat& cols, const Conv1dGeom& g, double* gx) {
  const std::size_t width = g.ks * g.c;
  const auto T = static_cast<std::ptrdiff_t>(g.t_len);
  for (std::size_t s = 0; s < g.seqs; ++s) {
    for (std::ptrdiff_t t = 0; t < T; ++t) {
      const double* src = cols.data() + (s * g.t_len + static_cast<std::size_t>(t)) * width;
      for (std::size_t j = 0; j < g.ks; ++j, src += g.c) {
        const std::ptrdiff_t st = t + g.offset(j);
        if (st < 0 || st >= T) continue;
        double* d = gx + (s * g.t_len + static_cast<std::size_t>(st)) * g.c;
        for (std::size_t ci = 0; ci < g.c; ++ci) d[ci] += src[ci];
      }
    }
  }
}

}  // namespace

Tensor conv1d_channels_last(const Tensor& x, const Tensor& kernel, std::size_t dilation,
                            const Tensor& bias) {
  const Shape& sx = x.shape();
  const Shape& sk = kernel.shape();
  if (sx.size() < 2 || sk.size() != 3 || sk[1] != sx.back()) {
    throw DimensionError("conv1d shape mismatch: input " + shape_str(sx) + ", kernel " +
                         shape_str(sk));
  }
  if (dilation == 0) throw ConfigError("dilation must be positive");
  require_odd(sk[2], "temporal conv");
  check_bias(bias, sk[0], "conv1d");
  const Conv1dGeom g{prod(sx, 0, sx.size() - 2), sx[sx.size() - 2], sk[1], sk[0], sk[2], dilation};
  const std::size_t width = g.ks * g.c;
  // wmat[(j*C + ci), o] = kernel[o, ci, j]
  auto wmat = std::make_shared<RowMat>(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(g.co));
  const auto kd = kernel.data();
  for (std::size_t o = 0; o < g.co; ++o) {
    for (std::size_t ci = 0; ci < g.c; ++ci) {
      for (std::size_t j = 0; j < g.ks; ++j) {
        (*wmat)(static_cast<Eigen::Index>(j * g.c + ci), static_cast<Eigen::Index>(o)) =
            kd[(o * g.c + ci) * g.ks + j];
      }
    }
  }
  auto cols = std::make_shared<RowMat>();
  im2col1d(x.data().data(), g, *cols);
  std::vector<double> out(g.rows() * g.co);
  auto om = as_mat(std::span<double>(out), g.rows(), g.co);
  om.noalias() = *cols * *wmat;
  if (bias.defined()) om.rowwise() += as_mat(bias.data(), 1, g.co).row(0);
  Shape out_shape = sx;
  out_shape.back() = g.co;
  Tensor y(out_shape, std::move(out));
  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  if (detail::needs_grad(std::span<const Tensor>(inputs))) {
    detail::record(y, "conv1d", inputs, [x, kernel, bias, g, cols, wmat](const detail::TensorImpl& o) {
      const auto gm = as_mat(std::span<const double>(o.grad), g.rows(), g.co);
      if (kernel.requires_grad()) {
        const RowMat gw = cols->transpose() * gm;  // [ks*C, Co]
        auto gk = detail::grad_of(kernel);
        for (std::size_t oc = 0; oc < g.co; ++oc) {
          for (std::size_t ci = 0; ci < g.c; ++ci) {
            for (std::size_t j = 0; j < g.ks; ++j) {
              gk[(oc * g.c + ci) * g.ks + j] +=
                  gw(static_cast<Eigen::Index>(j * g.c + ci), static_cast<Eigen::Index>(oc));
            }
          }
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        bias_grad(o.grad, bias, g.rows(), g.co, 1);
      }
      if (x.requires_grad()) {
        const RowMat gcols = gm * wmat->transpose();
        col2im1d(gcols, g, detail::grad_of(x).data());
      }
    });
  }
  return y;
}

Tensor conv1d_temporal(const Tensor& x, const Tensor& kernel, std::size_t dilation,
                       const Tensor& bias) {
  if (x.rank() != 3) {
    throw DimensionError("conv1d_temporal expects [B,C,T], got " + shape_str(x.shape()));
  }
  return permute(conv1d_channels_last(permute(x, {0, 2, 1}), kernel, dilation, bias), {0, 2, 1});
}

// ---------------------------------------------------------------------------
// Spatial convolutions
// ---------------------------------------------------------------------------

namespace {

using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

/// Output width and output channel tile of the direct 3D convolution.
constexpr std::size_t kLanes = 8;
constexpr std::size_t kOutTile = 8;

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

using Lanes = double __attribute__((vector_size(kLanes * sizeof(double))));

Lanes load_lanes(const double* p) {
  Lanes v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

struct Conv3dGeom {
  std::size_t ci, co, t, h, w, kt, kh, kw;
  std::size_t hp() const { return h + kh - 1; }
  // Rows are wide enough for whole lane tiles.
  std::size_t wp() const { return round_up(w, kLanes) + kw - 1; }
  std::size_t co_pad() const { return round_up(co, kOutTile); }
  std::size_t tp() const { return t + kt - 1; }
  std::size_t plane() const { return h * w; }
  std::size_t volume() const { return t * h * w; }
  std::size_t padded_volume() const { return tp() * hp() * wp(); }
  std::size_t patch() const { return ci * kt * kh * kw; }
  std::size_t prow(std::size_t c, std::size_t t_, std::size_t h_) const {
    return c * padded_volume() + (t_ * hp() + h_) * wp();
  }
};

/// Copies one batch entry [Ci,T,H,W] into a zero-bordered buffer.
void pad3d(const double* x, const Conv3dGeom& g, std::vector<double>& xp) {
  xp.assign(g.ci * g.padded_volume(), 0.0);
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t t = 0; t < g.t; ++t) {
      for (std::size_t h = 0; h < g.h; ++h) {
        std::copy_n(x + ((c * g.t + t) * g.h + h) * g.w, g.w,
                    xp.data() + g.prow(c, t + g.kt / 2, h + g.kh / 2) + g.kw / 2);
      }
    }
  }
}

/// kt[tap, co_pad] = kernel[o, tap], zero in the padding columns.
std::vector<double> tap_major_kernel(std::span<const double> kernel, const Conv3dGeom& g) {
  const std::size_t cp = g.co_pad();
  std::vector<double> kt(g.patch() * cp, 0.0);
  for (std::size_t o = 0; o < g.co; ++o) {
    for (std::size_t tap = 0; tap < g.patch(); ++tap) kt[tap * cp + o] = kernel[o * g.patch() + tap];
  }
  return kt;
}

/// Direct convolution of one padded batch entry into out[Co,T,H,W].
void conv3d_direct(const std::vector<double>& xp, const Conv3dGeom& g, const std::vector<double>& kt,
                   double* out) {
  const std::size_t cp = g.co_pad();
  for (std::size_t ob = 0; ob < cp; ob += kOutTile) {
    const std::size_t on = std::min(kOutTile, g.co - ob);
    for (std::size_t t = 0; t < g.t; ++t) {
      for (std::size_t h = 0; h < g.h; ++h) {
        for (std::size_t w0 = 0; w0 < g.w; w0 += kLanes) {
          Lanes acc[kOutTile] = {};
          const double* kv = kt.data() + ob;
          for (std::size_t c = 0; c < g.ci; ++c) {
            for (std::size_t dt = 0; dt < g.kt; ++dt) {
              for (std::size_t dh = 0; dh < g.kh; ++dh) {
                const double* xr = xp.data() + g.prow(c, t + dt, h + dh) + w0;
                for (std::size_t dw = 0; dw < g.kw; ++dw, kv += cp) {
                  const Lanes xv = load_lanes(xr + dw);
#pragma GCC unroll 8
                  for (std::size_t o = 0; o < kOutTile; ++o) acc[o] += kv[o] * xv;
                }
              }
            }
          }
          const std::size_t ln = std::min(kLanes, g.w - w0);
          for (std::size_t o = 0; o < on; ++o) {
            double lanes[kLanes];
            std::memcpy(lanes, &acc[o], sizeof lanes);
            std::copy_n(lanes, ln, out + (((ob + o) * g.t + t) * g.h + h) * g.w + w0);
          }
        }
      }
    }
  }
}

/// Accumulates d loss / d kernel of one batch entry into lane partials
/// part[co_pad, patch]; grad is that entry's [Co,T,H,W] slice.
void conv3d_kernel_grad(const std::vector<double>& xp, const Conv3dGeom& g, const double* grad,
                        std::vector<Lanes>& part) {
  const std::size_t cp = g.co_pad();
  for (std::size_t ob = 0; ob < cp; ob += kOutTile) {
    const std::size_t on = std::min(kOutTile, g.co - ob);
    for (std::size_t t = 0; t < g.t; ++t) {
      for (std::size_t h = 0; h < g.h; ++h) {
        for (std::size_t w0 = 0; w0 < g.w; w0 += kLanes) {
          const std::size_t ln = std::min(kLanes, g.w - w0);
          Lanes gv[kOutTile] = {};
          for (std::size_t o = 0; o < on; ++o) {
            double lanes[kLanes] = {};
            std::copy_n(grad + (((ob + o) * g.t + t) * g.h + h) * g.w + w0, ln, lanes);
            std::memcpy(&gv[o], lanes, sizeof lanes);
          }
          std::size_t tap = 0;
          for (std::size_t c = 0; c < g.ci; ++c) {
            for (std::size_t dt = 0; dt < g.kt; ++dt) {
              for (std::size_t dh = 0; dh < g.kh; ++dh) {
                const double* xr = xp.data() + g.prow(c, t + dt, h + dh) + w0;
                for (std::size_t dw = 0; dw < g.kw; ++dw, ++tap) {
                  const Lanes xv = load_lanes(xr + dw);
                  Lanes* pv = part.data() + ob * g.patch() + tap;
#pragma GCC unroll 8
                  for (std::size_t o = 0; o < kOutTile; ++o) pv[o * g.patch()] += gv[o] * xv;
                }
              }
            }
          }
        }
      }
    }
  }
}

/// Adjoint of clip_cols: accumulates cols back into the padded buffer.
void clip_cols_adjoint(const RowMat& cols, const Conv3dGeom& g, std::vector<double>& gxp) {
  Eigen::Index r = 0;
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t dt = 0; dt < g.kt; ++dt) {
      for (std::size_t dh = 0; dh < g.kh; ++dh) {
        for (std::size_t dw = 0; dw < g.kw; ++dw, ++r) {
          const double* s = cols.row(r).data();
          for (std::size_t t = 0; t < g.t; ++t) {
            for (std::size_t h = 0; h < g.h; ++h, s += g.w) {
              double* d = gxp.data() + g.prow(c, t + dt, h + dh) + dw;
              for (std::size_t w = 0; w < g.w; ++w) d[w] += s[w];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv3d_local(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const Shape& sx = x.shape();
  const Shape& sk = kernel.shape();
  if (sx.size() != 5 || sk.size() != 5 || sk[1] != sx[1]) {
    throw DimensionError("conv3d shape mismatch: input " + shape_str(sx) + ", kernel " +
                         shape_str(sk));
  }
  require_odd(sk[2], "conv3d temporal");
  require_odd(sk[3], "conv3d height");
  require_odd(sk[4], "conv3d width");
  check_bias(bias, sk[0], "conv3d");
  const std::size_t batch = sx[0];
  const Conv3dGeom g{sx[1], sk[0], sx[2], sx[3], sx[4], sk[2], sk[3], sk[4]};
  std::vector<double> out(batch * g.co * g.volume());
  const std::vector<double> kt = tap_major_kernel(kernel.data(), g);
  std::vector<double> xp;
  for (std::size_t b = 0; b < batch; ++b) {
    pad3d(x.data().data() + b * g.ci * g.volume(), g, xp);
    conv3d_direct(xp, g, kt, out.data() + b * g.co * g.volume());
  }
  if (bias.defined()) add_bias(out, bias, batch, g.co, g.volume());
  Tensor y({batch, g.co, g.t, g.h, g.w}, std::move(out));
  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  if (detail::needs_grad(std::span<const Tensor>(inputs))) {
    detail::record(y, "conv3d", inputs, [x, kernel, bias, g, batch](const detail::TensorImpl& o) {
      if (bias.defined() && bias.requires_grad()) bias_grad(o.grad, bias, batch, g.co, g.volume());
      const bool want_k = kernel.requires_grad();
      const bool want_x = x.requires_grad();
      if (!want_k && !want_x) return;
      const auto km = as_mat(kernel.data(), g.co, g.patch());
      RowMat cols;
      if (want_x) cols.resize(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.volume()));
      std::vector<Lanes> part(want_k ? g.co_pad() * g.patch() : 0, Lanes{});
      std::vector<double> xp;
      std::vector<double> gxp;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* gb = o.grad.data() + b * g.co * g.volume();
        if (want_k) {
          pad3d(x.data().data() + b * g.ci * g.volume(), g, xp);
          conv3d_kernel_grad(xp, g, gb, part);
        }
        if (want_x) {
          gxp.assign(g.ci * g.padded_volume(), 0.0);
          cols.noalias() = km.transpose() * as_mat(std::span<const double>(gb, g.co * g.volume()), g.co, g.volume());
          clip_cols_adjoint(cols, g, gxp);
        }
        if (want_x) {
          auto gx = detail::grad_of(x);
          for (std::size_t c = 0; c < g.ci; ++c) {
            for (std::size_t t = 0; t < g.t; ++t) {
              for (std::size_t h = 0; h < g.h; ++h) {
                const double* src = gxp.data() + g.prow(c, t + g.kt / 2, h + g.kh / 2) + g.kw / 2;
                double* dst = gx.data() + (((b * g.ci + c) * g.t + t) * g.h + h) * g.w;
                for (std::size_t w = 0; w < g.w; ++w) dst[w] += src[w];
              }
            }
          }
        }
      }
      if (want_k) {
        auto gk = detail::grad_of(kernel);
        for (std::size_t oc = 0; oc < g.co; ++oc) {
          for (std::size_t tap = 0; tap < g.patch(); ++tap) {
            const Lanes& pv = part[oc * g.patch() + tap];
            double acc = 0.0;
            for (std::size_t l = 0; l < kLanes; ++l) acc += pv[l];
            gk[oc * g.patch() + tap] += acc;
          }
        }
      }
    });
  }
  return y;
}

namespace {

struct Conv2dGeom {
  std::size_t n, c, h, w, kh, kw, stride, ho, wo;
  // Nonzero when the input is a [B,C,T,H,W] clip volume read frame by frame.
  std::size_t frames;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t plane_offset(std::size_t img, std::size_t ch) const {
    if (frames == 0) return (img * c + ch) * h * w;
    return (((img / frames) * c + ch) * frames + img % frames) * h * w;
  }
};

/// Output columns [ow0, ow1) whose tap j falls inside the input row.
std::pair<std::size_t, std::size_t> valid_columns(const Conv2dGeom& g, std::size_t j) {
  const std::size_t pw = g.kw / 2;
  const std::size_t lo = j >= pw ? 0 : (pw - j + g.stride - 1) / g.stride;
  const std::size_t hi = std::min(g.wo, (g.w + pw - j + g.stride - 1) / g.stride);
  return {std::min(lo, hi), hi};
}

/// cols[patch, (n1-n0)*ho*wo] for images n0..n1-1.
void im2col2d(const double* x, const Conv2dGeom& g, std::size_t n0, std::size_t n1, RowMat& cols) {
  const std::size_t cols_n = (n1 - n0) * g.ho * g.wo;
  cols.resize(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(cols_n));
  const auto ph = static_cast<std::ptrdiff_t>(g.kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(g.kw / 2);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j, ++row) {
        const auto [ow0, ow1] = valid_columns(g, j);
        double* dst = cols.row(row).data();
        for (std::size_t n = n0; n < n1; ++n) {
          const double* xc = x + g.plane_offset(n, c);
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const std::ptrdiff_t sh = static_cast<std::ptrdiff_t>(oh * g.stride + i) - ph;
            if (sh < 0 || sh >= static_cast<std::ptrdiff_t>(g.h)) {
              std::fill_n(dst, g.wo, 0.0);
              dst += g.wo;
              continue;
            }
            const double* xr = xc + (sh * static_cast<std::ptrdiff_t>(g.w) - pw + static_cast<std::ptrdiff_t>(j));
            std::fill(dst, dst + ow0, 0.0);
            for (std::size_t ow = ow0; ow < ow1; ++ow) dst[ow] = xr[ow * g.stride];
            std::fill(dst + ow1, dst + g.wo, 0.0);
            dst += g.wo;
          }
        }
      }
    }
  }
}

void col2im2d(const RowMat& cols, const Conv2dGeom& g, std::size_t n0, std::size_t n1, double* gx) {
  const auto ph = static_cast<std::ptrdiff_t>(g.kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(g.kw / 2);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j, ++row) {
        const auto [ow0, ow1] = valid_columns(g, j);
        const double* src = cols.row(row).data();
        for (std::size_t n = n0; n < n1; ++n) {
          double* xc = gx + g.plane_offset(n, c);
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const std::ptrdiff_t sh = static_cast<std::ptrdiff_t>(oh * g.stride + i) - ph;
            if (sh < 0 || sh >= static_cast<std::ptrdiff_t>(g.h)) {
              src += g.wo;
              continue;
            }
            double* xr = xc + (sh * static_cast<std::ptrdiff_t>(g.w) - pw + static_cast<std::ptrdiff_t>(j));
            for (std::size_t ow = ow0; ow < ow1; ++ow) xr[ow * g.stride] += src[ow];
            src += g.wo;
          }
        }
      }
    }
  }
}

// Images are processed in chunks small enough for the column buffer to stay cache resident.
std::size_t conv2d_chunk(const Conv2dGeom& g) {
  const std::size_t per_image = g.patch() * g.ho * g.wo;
  return std::max<std::size_t>(1, (std::size_t{1} << 16) / std::max<std::size_t>(1, per_image));
}

Tensor conv2d_impl(const Tensor& x, const Tensor& kernel, const Tensor& bias, const Conv2dGeom& g) {
  require_odd(g.kh, "conv2d height");
  require_odd(g.kw, "conv2d width");
  const std::size_t co = kernel.dim(0);
  check_bias(bias, co, "conv2d");
  const std::size_t plane = g.ho * g.wo;
  const std::size_t chunk = conv2d_chunk(g);
  const auto km = as_mat(kernel.data(), co, g.patch());
  std::vector<double> out(g.n * co * plane);
  RowMat cols;
  RowMat res;
  for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::size_t n1 = std::min(g.n, n0 + chunk);
    im2col2d(x.data().data(), g, n0, n1, cols);
    res.noalias() = km * cols;  // [Co, chunk*plane]
    for (std::size_t n = n0; n < n1; ++n) {
      for (std::size_t o = 0; o < co; ++o) {
        std::copy_n(res.row(static_cast<Eigen::Index>(o)).data() + (n - n0) * plane, plane,
                    out.begin() + static_cast<std::ptrdiff_t>((n * co + o) * plane));
      }
    }
  }
  if (bias.defined()) add_bias(out, bias, g.n, co, plane);
  Tensor y({g.n, co, g.ho, g.wo}, std::move(out));
  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  if (detail::needs_grad(std::span<const Tensor>(inputs))) {
    detail::record(y, "conv2d", inputs, [x, kernel, bias, g, co, plane, chunk](const detail::TensorImpl& o) {
      if (bias.defined() && bias.requires_grad()) bias_grad(o.grad, bias, g.n, co, plane);
      const auto km = as_mat(kernel.data(), co, g.patch());
      RowMat gk_acc = RowMat::Zero(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(g.patch()));
      RowMat gm;
      RowMat cols;
      for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
        const std::size_t n1 = std::min(g.n, n0 + chunk);
        gm.resize(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>((n1 - n0) * plane));
        for (std::size_t n = n0; n < n1; ++n) {
          for (std::size_t oc = 0; oc < co; ++oc) {
            std::copy_n(o.grad.begin() + static_cast<std::ptrdiff_t>((n * co + oc) * plane), plane,
                        gm.row(static_cast<Eigen::Index>(oc)).data() + (n - n0) * plane);
          }
        }
        if (kernel.requires_grad()) {
          im2col2d(x.data().data(), g, n0, n1, cols);
          gk_acc.noalias() += gm * cols.transpose();
        }
        if (x.requires_grad()) {
          cols.noalias() = km.transpose() * gm;
          col2im2d(cols, g, n0, n1, detail::grad_of(x).data());
        }
      }
      if (kernel.requires_grad()) as_mat(detail::grad_of(kernel), co, g.patch()) += gk_acc;
    });
  }
  return y;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, const Tensor& bias) {
  const Shape& sx = x.shape();
  const Shape& sk = kernel.shape();
  if (sx.size() != 4 || sk.size() != 4 || sk[1] != sx[1]) {
    throw DimensionError("conv2d shape mismatch: input " + shape_str(sx) + ", kernel " +
                         shape_str(sk));
  }
  if (stride == 0) throw ConfigError("conv2d stride must be positive");
  const Conv2dGeom g{sx[0], sx[1], sx[2], sx[3], sk[2], sk[3], stride,
                     (sx[2] + stride - 1) / stride, (sx[3] + stride - 1) / stride, 0};
  return conv2d_impl(x, kernel, bias, g);
}

Tensor conv2d_frames(const Tensor& x, const Tensor& kernel, std::size_t stride, const Tensor& bias) {
  const Shape& sx = x.shape();
  const Shape& sk = kernel.shape();
  if (sx.size() != 5 || sk.size() != 4 || sk[1] != sx[1]) {
    throw DimensionError("conv2d_frames shape mismatch: input " + shape_str(sx) + ", kernel " +
                         shape_str(sk));
  }
  if (stride == 0) throw ConfigError("conv2d stride must be positive");
  const Conv2dGeom g{sx[0] * sx[2], sx[1], sx[3], sx[4], sk[2], sk[3], stride,
                     (sx[3] + stride - 1) / stride, (sx[4] + stride - 1) / stride, sx[2]};
  return conv2d_impl(x, kernel, bias, g);
}

Tensor avg_pool2d(const Tensor& x, std::size_t window) {
  const Shape& s = x.shape();
  if (s.size() != 4 || window == 0 || s[2] % window != 0 || s[3] % window != 0) {
    throw DimensionError("avg_pool2d window " + std::to_string(window) +
                         " incompatible with shape " + shape_str(s));
  }
  const std::size_t planes = s[0] * s[1];
  const std::size_t h = s[2];
  const std::size_t w = s[3];
  const std::size_t ho = h / window;
  const std::size_t wo = w / window;
  const double inv = 1.0 / static_cast<double>(window * window);
  std::vector<double> out(planes * ho * wo, 0.0);
  const auto d = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        out[(p * ho + i / window) * wo + j / window] += d[(p * h + i) * w + j] * inv;
      }
    }
  }
  Tensor y({s[0], s[1], ho, wo}, std::move(out));
  if (detail::needs_grad({&x})) {
    detail::record(y, "avg_pool2d", {x}, [x, planes, h, w, ho, wo, window, inv](const detail::TensorImpl& o) {
      auto g = detail::grad_of(x);
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < h; ++i) {
          for (std::size_t j = 0; j < w; ++j) {
            g[(p * h + i) * w + j] += o.grad[(p * ho + i / window) * wo + j / window] * inv;
          }
        }
      }
    });
  }
  return y;
}

Tensor gather_cells(const Tensor& feat, std::span<const std::size_t> cells, std::size_t nodes) {
  const Shape& s = feat.shape();
  if (s.size() != 5) throw DimensionError("gather_cells expects [B,C,T,H,W], got " + shape_str(s));
  const std::size_t batch = s[0];
  const std::size_t c = s[1];
  const std::size_t t_len = s[2];
  const std::size_t plane = s[3] * s[4];
  if (cells.size() != batch * nodes * t_len) {
    throw DimensionError("gather_cells expects " + std::to_string(batch * nodes * t_len) +
                         " cell indices, got " + std::to_string(cells.size()));
  }
  for (auto cell : cells) {
    if (cell >= plane) throw DataError("gather cell index out of range");
  }
  std::vector<double> out(batch * nodes * t_len * c);
  const auto d = feat.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t n = 0; n < nodes; ++n) {
      for (std::size_t t = 0; t < t_len; ++t) {
        const std::size_t cell = cells[(b * nodes + n) * t_len + t];
        double* dst = out.data() + ((b * nodes + n) * t_len + t) * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = d[((b * c + ch) * t_len + t) * plane + cell];
      }
    }
  }
  Tensor y({batch, nodes, t_len, c}, std::move(out));
  if (detail::needs_grad({&feat})) {
    std::vector<std::size_t> idx(cells.begin(), cells.end());
    detail::record(y, "gather_cells", {feat}, [feat, idx, batch, nodes, t_len, c, plane](const detail::TensorImpl& o) {
      auto g = detail::grad_of(feat);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t n = 0; n < nodes; ++n) {
          for (std::size_t t = 0; t < t_len; ++t) {
            const std::size_t cell = idx[(b * nodes + n) * t_len + t];
            const double* src = o.grad.data() + ((b * nodes + n) * t_len + t) * c;
            for (std::size_t ch = 0; ch < c; ++ch) g[((b * c + ch) * t_len + t) * plane + cell] += src[ch];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

namespace {

template <typename Expr>
RowMat sigmoid_array(const Expr& a) {
  return (1.0 / (1.0 + (-a).exp())).matrix();
}

/// tanh through exp so the whole block vectorizes.
template <typename Expr>
RowMat tanh_array(const Expr& a) {
  return (1.0 - 2.0 / (1.0 + (2.0 * a).exp())).matrix();
}

}  // namespace

Tensor gru_scan(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih,
                const Tensor& b_hh, bool reverse) {
  const Shape& sx = x.shape();
  if (sx.size() != 3) throw DimensionError("gru expects [B,T,D], got " + shape_str(sx));
  const std::size_t batch = sx[0];
  const std::size_t t_len = sx[1];
  const std::size_t d = sx[2];
  if (w_hh.rank() != 2 || w_hh.dim(0) != 3 * w_hh.dim(1)) {
    throw DimensionError("gru w_hh must be [3H,H], got " + shape_str(w_hh.shape()));
  }
  const std::size_t h = w_hh.dim(1);
  if (w_ih.shape() != Shape{3 * h, d} || b_ih.shape() != Shape{3 * h} || b_hh.shape() != Shape{3 * h}) {
    throw DimensionError("gru parameter shapes inconsistent with input " + shape_str(sx) +
                         " and hidden size " + std::to_string(h));
  }
  const std::size_t g3 = 3 * h;
  const auto wih = as_mat(w_ih.data(), g3, d);
  const auto whh = as_mat(w_hh.data(), g3, h);
  const Eigen::Map<const Eigen::RowVectorXd> bih(b_ih.data().data(), static_cast<Eigen::Index>(g3));
  const Eigen::Map<const Eigen::RowVectorXd> bhh(b_hh.data().data(), static_cast<Eigen::Index>(g3));

  // Input projections for every (b, t): rows ordered b*T + t.
  RowMat xp = as_mat(x.data(), batch * t_len, d) * wih.transpose();
  xp.rowwise() += bih;

  // Per-step caches, indexed by step s (not time t).
  struct Cache {
    RowMat r, z, n, hn, h_prev;
  };
  auto caches = std::make_shared<std::vector<Cache>>(t_len);
  std::vector<double> out(batch * t_len * h);
  RowMat h_prev = RowMat::Zero(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(h));
  const auto H = static_cast<Eigen::Index>(h);
  const auto B = static_cast<Eigen::Index>(batch);
  // Row b of step s's input projection is row b*T + t of xp.
  const Eigen::Index xstride = static_cast<Eigen::Index>(t_len * g3);
  for (std::size_t s = 0; s < t_len; ++s) {
    const std::size_t t = reverse ? t_len - 1 - s : s;
    RowMat hp = h_prev * whh.transpose();
    hp.rowwise() += bhh;
    const Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> xs(xp.data() + t * g3, B, static_cast<Eigen::Index>(g3),
                                                              Eigen::OuterStride<>(xstride));
    auto& c = (*caches)[s];
    c.r = sigmoid_array(xs.leftCols(H).array() + hp.leftCols(H).array());
    c.z = sigmoid_array(xs.middleCols(H, H).array() + hp.middleCols(H, H).array());
    c.hn = hp.middleCols(2 * H, H);
    c.n = tanh_array(xs.middleCols(2 * H, H).array() + c.r.array() * c.hn.array());
    c.h_prev = h_prev;
    h_prev = ((1.0 - c.z.array()) * c.n.array() + c.z.array() * h_prev.array()).matrix();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(h_prev.data() + b * h, h, out.data() + (b * t_len + t) * h);
    }
  }
  Tensor y({batch, t_len, h}, std::move(out));
  if (detail::needs_grad({&x, &w_ih, &w_hh, &b_ih, &b_hh})) {
    detail::record(
        y, "gru", {x, w_ih, w_hh, b_ih, b_hh},
        [x, w_ih, w_hh, b_ih, b_hh, caches, batch, t_len, d, h, g3, reverse](const detail::TensorImpl& o) {
          const auto H = static_cast<Eigen::Index>(h);
          const auto whh = as_mat(w_hh.data(), g3, h);
          RowMat dxp = RowMat::Zero(static_cast<Eigen::Index>(batch * t_len), static_cast<Eigen::Index>(g3));
          RowMat dwhh = RowMat::Zero(static_cast<Eigen::Index>(g3), H);
          Eigen::RowVectorXd dbhh = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(g3));
          RowMat carry = RowMat::Zero(static_cast<Eigen::Index>(batch), H);
          RowMat dhp(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(g3));
          RowMat dprev(static_cast<Eigen::Index>(batch), H);
          for (std::size_t s = t_len; s-- > 0;) {
            const std::size_t t = reverse ? t_len - 1 - s : s;
            const auto& c = (*caches)[s];
            for (std::size_t b = 0; b < batch; ++b) {
              const auto bi = static_cast<Eigen::Index>(b);
              for (Eigen::Index k = 0; k < H; ++k) {
                const double dh = o.grad[(b * t_len + t) * h + static_cast<std::size_t>(k)] + carry(bi, k);
                const double r = c.r(bi, k);
                const double z = c.z(bi, k);
                const double n = c.n(bi, k);
                const double hprev = c.h_prev(bi, k);
                const double dan = dh * (1.0 - z) * (1.0 - n * n);
                const double daz = dh * (hprev - n) * z * (1.0 - z);
                const double dar = dan * c.hn(bi, k) * r * (1.0 - r);
                dprev(bi, k) = dh * z;
                dhp(bi, k) = dar;
                dhp(bi, H + k) = daz;
                dhp(bi, 2 * H + k) = dan * r;
                auto xrow = dxp.row(static_cast<Eigen::Index>(b * t_len + t));
                xrow(k) = dar;
                xrow(H + k) = daz;
                xrow(2 * H + k) = dan;
              }
            }
            dwhh.noalias() += dhp.transpose() * c.h_prev;
            dbhh += dhp.colwise().sum();
            dprev.noalias() += dhp * whh;
            carry = dprev;
          }
          if (w_hh.requires_grad()) as_mat(detail::grad_of(w_hh), g3, h) += dwhh;
          if (b_hh.requires_grad()) {
            auto g = detail::grad_of(b_hh);
            for (std::size_t i = 0; i < g3; ++i) g[i] += dbhh(static_cast<Eigen::Index>(i));
          }
          if (b_ih.requires_grad()) {
            auto g = detail::grad_of(b_ih);
            const Eigen::RowVectorXd col = dxp.colwise().sum();
            for (std::size_t i = 0; i < g3; ++i) g[i] += col(static_cast<Eigen::Index>(i));
          }
          if (w_ih.requires_grad()) {
            as_mat(detail::grad_of(w_ih), g3, d).noalias() +=
                dxp.transpose() * as_mat(x.data(), batch * t_len, d);
          }
          if (x.requires_grad()) {
            as_mat(detail::grad_of(x), batch * t_len, d).noalias() +=
                dxp * as_mat(w_ih.data(), g3, d);
          }
        });
  }
  return y;
}

bool all_finite(const Tensor& t) {
  const auto d = t.data();
  return std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace lipdyn
