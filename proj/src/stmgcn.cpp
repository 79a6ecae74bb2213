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

#include "lipdyn/stmgcn.hpp"

#include <cmath>

#include "lipdyn/errors.hpp"

namespace lipdyn {

namespace {

GruDirection make_gru_direction(ModelParams& params, const std::string& prefix, std::size_t in,
                                std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruDirection d;
  d.w_ih = params.add_uniform(prefix + ".w_ih", {3 * hidden, in}, bound, rng);
  d.w_hh = params.add_uniform(prefix + ".w_hh", {3 * hidden, hidden}, bound, rng);
  d.b_ih = params.add_uniform(prefix + ".b_ih", {3 * hidden}, bound, rng);
  d.b_hh = params.add_uniform(prefix + ".b_hh", {3 * hidden}, bound, rng);
  return d;
}

/// Stacks the batch's adjacency matrices into a constant [B,N,N] (or [N,N]).
Tensor stack_adjacency(std::span<const AdjacencyMatrix> adjacency, std::size_t batch, std::size_t nodes) {
  if (adjacency.size() != 1 && adjacency.size() != batch) {
    throw DimensionError("expected 1 or " + std::to_string(batch) + " adjacency matrices, got " +
                         std::to_string(adjacency.size()));
  }
  std::vector<double> data;
  data.reserve(adjacency.size() * nodes * nodes);
  for (const auto& m : adjacency) {
    if (!m.normalized) {
      throw UsageError(std::string("graph convolution requires a row-normalized adjacency; ") +
                       std::string(to_string(m.kind)) + " matrix is not normalized");
    }
    if (m.weights.shape() != Shape{nodes, nodes}) {
      throw DimensionError("adjacency " + shape_str(m.weights.shape()) + " does not match " +
                           std::to_string(nodes) + " nodes");
    }
    data.insert(data.end(), m.weights.data().begin(), m.weights.data().end());
  }
  if (adjacency.size() == 1) return Tensor({nodes, nodes}, std::move(data));
  return Tensor({batch, nodes, nodes}, std::move(data));
}

}  // namespace

GraphBranch make_branch(GraphKind kind, const BranchConfig& cfg, ModelParams& params, Rng& rng,
                        const std::string& prefix) {
  if (cfg.out_dim == 0 || cfg.out_dim % 2 != 0) {
    throw ConfigError("branch out_dim must be a positive even number");
  }
  if (cfg.temporal_kernel % 2 == 0) throw ConfigError("temporal kernel width must be odd");
  GraphBranch br;
  br.kind = kind;
  br.out_dim = cfg.out_dim;
  const std::size_t c = cfg.channels;
  const double tc_bound = 1.0 / std::sqrt(static_cast<double>(c * cfg.temporal_kernel));
  const double w_bound = 1.0 / std::sqrt(static_cast<double>(c));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    STGCNLayerParams lp;
    lp.tc1_kernel = params.add_uniform(p + ".tc1.kernel", {c, c, cfg.temporal_kernel}, tc_bound, rng);
    lp.tc1_bias = params.add_uniform(p + ".tc1.bias", {c}, tc_bound, rng);
    lp.sgc_weight = params.add_uniform(p + ".sgc.weight", {c, c}, w_bound, rng);
    lp.tc2_kernel = params.add_uniform(p + ".tc2.kernel", {c, c, cfg.temporal_kernel}, tc_bound, rng);
    lp.tc2_bias = params.add_uniform(p + ".tc2.bias", {c}, tc_bound, rng);
    br.layers.push_back(std::move(lp));
  }
  const std::size_t hidden = cfg.out_dim / 2;
  br.gru.forward = make_gru_direction(params, prefix + ".gru.fwd", c, hidden, rng);
  br.gru.backward = make_gru_direction(params, prefix + ".gru.bwd", c, hidden, rng);
  return br;
}

Tensor sgc(const Tensor& f, std::span<const AdjacencyMatrix> adjacency, const Tensor& w,
           UnaryOp activation) {
  if (f.rank() != 4) throw DimensionError("sgc expects [B,N,T,C], got " + shape_str(f.shape()));
  const std::size_t b = f.dim(0);
  const std::size_t n = f.dim(1);
  const std::size_t t = f.dim(2);
  const std::size_t c = f.dim(3);
  if (w.shape() != Shape{c, c}) {
    throw DimensionError("sgc weight must be [" + std::to_string(c) + "," + std::to_string(c) +
                         "], got " + shape_str(w.shape()));
  }
  const Tensor m = stack_adjacency(adjacency, b, n);
  // M is applied over the node axis with time and channels flattened together.
  Tensor x = matmul(m, reshape(f, {b, n, t * c}));
  x = matmul(reshape(x, {b * n * t, c}), w);
  return pointwise(reshape(x, {b, n, t, c}), activation);
}

Tensor stgcn_layer(const Tensor& f, std::span<const AdjacencyMatrix> adjacency,
                   const STGCNLayerParams& p) {
  Tensor x = conv1d_channels_last(f, p.tc1_kernel, 1, p.tc1_bias);
  x = sgc(x, adjacency, p.sgc_weight, p.activation);
  x = conv1d_channels_last(x, p.tc2_kernel, 1, p.tc2_bias);
  return add(f, x);
}

Tensor bigru(const Tensor& seq, const BiGruParams& p) {
  const auto& f = p.forward;
  const auto& r = p.backward;
  return concat({gru_scan(seq, f.w_ih, f.w_hh, f.b_ih, f.b_hh, false),
                 gru_scan(seq, r.w_ih, r.w_hh, r.b_ih, r.b_hh, true)},
                -1);
}

Tensor run_branch(const Tensor& f_node, std::span<const AdjacencyMatrix> adjacency,
                  const GraphBranch& branch) {
  Tensor x = f_node;
  for (const auto& layer : branch.layers) x = stgcn_layer(x, adjacency, layer);
  return bigru(mean(x, 1), branch.gru);
}

}  // namespace lipdyn
