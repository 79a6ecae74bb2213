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
#include <string>
#include <vector>

#include "lipdyn/graphs.hpp"
#include "lipdyn/ops.hpp"
#include "lipdyn/params.hpp"

namespace lipdyn {

/// One TC -> SGC -> TC layer. Channel width is constant, so W is [C,C].
struct STGCNLayerParams {
  Tensor tc1_kernel;  // [C,C,k]
  Tensor tc1_bias;    // [C]
  Tensor sgc_weight;  // [C,C]
  Tensor tc2_kernel;  // [C,C,k]
  Tensor tc2_bias;    // [C]
  UnaryOp activation = UnaryOp::kRelu;
};

struct GruDirection {
  Tensor w_ih;  // [3H,D]
  Tensor w_hh;  // [3H,H]
  Tensor b_ih;  // [3H]
  Tensor b_hh;  // [3H]
};

struct BiGruParams {
  GruDirection forward;
  GruDirection backward;
};

/// Parameters of one graph's branch. The adjacency itself is per clip and
/// is passed alongside (DAG and SAG depend on the clip's landmarks/features).
struct GraphBranch {
  GraphKind kind = GraphKind::kLcg;
  std::vector<STGCNLayerParams> layers;
  BiGruParams gru;
  std::size_t out_dim = 0;
};

struct BranchConfig {
  std::size_t channels = 8;
  std::size_t layers = 2;
  std::size_t temporal_kernel = 3;
  std::size_t out_dim = 64;  // even; GRU hidden size is out_dim / 2
};

GraphBranch make_branch(GraphKind kind, const BranchConfig& cfg, ModelParams& params, Rng& rng,
                        const std::string& prefix);

/// Time-distributed graph convolution act(M F_t W) for every frame t.
/// f[B,N,T,C]; `adjacency` holds one normalized matrix shared by the batch or
/// one per batch entry. Throws UsageError on an unnormalized matrix.
Tensor sgc(const Tensor& f, std::span<const AdjacencyMatrix> adjacency, const Tensor& w,
           UnaryOp activation = UnaryOp::kRelu);

/// f + TC2(SGC(TC1(f), M)).
Tensor stgcn_layer(const Tensor& f, std::span<const AdjacencyMatrix> adjacency,
                   const STGCNLayerParams& p);

/// [B,T,D] -> [B,T,2H]: forward-time states then reverse-time states.
Tensor bigru(const Tensor& seq, const BiGruParams& p);

/// ST-GCN stack, mean over nodes, then Bi-GRU: [B,N,T,C] -> [B,T,out_dim].
Tensor run_branch(const Tensor& f_node, std::span<const AdjacencyMatrix> adjacency,
                  const GraphBranch& branch);

}  // namespace lipdyn
