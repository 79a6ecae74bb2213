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

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lipdyn/backend.hpp"
#include "lipdyn/frontend.hpp"
#include "lipdyn/fusion.hpp"
#include "lipdyn/graphs.hpp"
#include "lipdyn/stmgcn.hpp"

namespace lipdyn {

/// Architecture of the full recognizer. Graph branches run at the dynamic
/// feature width and emit features of the visual width.
struct ModelConfig {
  FrontendConfig frontend;
  std::size_t branch_layers = 2;
  std::size_t branch_temporal_kernel = 3;
  BackendConfig backend;
  bool use_dag = true;
  bool use_lcg = true;
  bool use_sag = true;
  /// "auto" picks sum2 for two graphs and composite for three.
  std::string fusion_mode = "auto";
  double dag_epsilon = kDagEpsilon;

  void validate() const;
  /// Enabled graphs in canonical order lcg, dag, sag.
  std::vector<GraphKind> enabled_graphs() const;
  /// Fusion over the enabled graphs; empty with fewer than two graphs.
  std::optional<FusionSpec> fusion_spec() const;
  BranchConfig branch_config() const;
};

/// A minibatch of clips.
struct ClipBatch {
  Tensor frames;  // [B,1,T,H,W] intensities
  Tensor coords;  // [B,T,20,2] pixels
  std::vector<int> labels;
  std::vector<std::string> clip_ids;
  std::vector<std::string> speaker_ids;
  double frame_size = 16.0;
  /// Similarity graphs to use instead of building them from the batch,
  /// one per clip. Lets finite differences hold the graph fixed.
  std::vector<AdjacencyMatrix> sag;

  std::size_t size() const { return labels.size(); }
};

struct ForwardResult {
  Tensor logits;
  /// Named intermediate activations in evaluation order.
  std::vector<std::pair<std::string, Tensor>> trace;
};

class LipModel {
 public:
  LipModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  ForwardResult forward(const ClipBatch& batch) const;
  /// Label-smoothed cross entropy of forward(batch).
  Tensor loss(const ClipBatch& batch, ForwardResult* result = nullptr) const;

  std::size_t param_count() const { return params_.count(); }
  /// Parameters that exist only because of the landmark graphs.
  std::size_t graph_param_count() const;

  /// Per-clip adjacency for one graph kind. DAG uses the landmark tracks;
  /// SAG uses time-averaged sampled node features (values only).
  std::vector<AdjacencyMatrix> adjacency(GraphKind kind, const ClipBatch& batch,
                                         const Tensor& sampled_nodes) const;
  /// The similarity graphs forward() would build for this batch.
  std::vector<AdjacencyMatrix> similarity_graphs(const ClipBatch& batch) const;
  /// Lip dynamic feature extractor parameters.
  const DynamicExtractor& dynamic_extractor() const { return ed_; }

 private:
  ModelConfig cfg_;
  LipTopology topology_;
  AdjacencyMatrix lcg_;
  ModelParams params_;
  DynamicExtractor ed_;
  VisualExtractor ev_;
  std::optional<Linear> lcg_lift_;
  std::vector<GraphBranch> branches_;  // same order as enabled_graphs()
  std::optional<FusionSpec> fusion_spec_;
  FusionParams fusion_;
  BackendParams backend_;
};

/// LCG node features: coordinates mapped to [-1,1], [B,T,N,2] -> [B,N,T,2].
Tensor normalized_coordinate_nodes(const Tensor& coords, double frame_size);

}  // namespace lipdyn
