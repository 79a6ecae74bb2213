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

#include "lipdyn/model.hpp"

#include "lipdyn/errors.hpp"
#include "lipdyn/ops.hpp"

namespace lipdyn {

void ModelConfig::validate() const {
  frontend.validate();
  backend.validate();
  if (branch_layers == 0) throw ConfigError("graph branches need at least one ST-GCN layer");
  if (branch_temporal_kernel % 2 == 0) throw ConfigError("branch temporal kernel must be odd");
  if (frontend.visual_dim % 2 != 0) throw ConfigError("visual_dim must be even (Bi-GRU halves)");
  if (fusion_mode != "auto") {
    const FusionMode mode = parse_fusion_mode(fusion_mode);
    const std::size_t graphs = enabled_graphs().size();
    if (graphs != fusion_operand_count(mode)) {
      throw ConfigError("fusion.mode " + fusion_mode + " needs " +
                        std::to_string(fusion_operand_count(mode)) + " enabled graphs, have " +
                        std::to_string(graphs));
    }
  }
  fusion_spec();
}

std::vector<GraphKind> ModelConfig::enabled_graphs() const {
  std::vector<GraphKind> out;
  if (use_lcg) out.push_back(GraphKind::kLcg);
  if (use_dag) out.push_back(GraphKind::kDag);
  if (use_sag) out.push_back(GraphKind::kSag);
  return out;
}

std::optional<FusionSpec> ModelConfig::fusion_spec() const {
  const auto graphs = enabled_graphs();
  if (graphs.size() < 2) return std::nullopt;
  FusionSpec spec;
  spec.operands = graphs;
  spec.reduce_dim = frontend.visual_dim;
  if (fusion_mode == "auto") {
    spec.mode = graphs.size() == 2 ? FusionMode::kSum2 : FusionMode::kComposite;
  } else {
    spec.mode = parse_fusion_mode(fusion_mode);
  }
  spec.validate();
  return spec;
}

BranchConfig ModelConfig::branch_config() const {
  BranchConfig b;
  b.channels = frontend.dyn_channels;
  b.layers = branch_layers;
  b.temporal_kernel = branch_temporal_kernel;
  b.out_dim = frontend.visual_dim;
  return b;
}

LipModel::LipModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), topology_(LipTopology::standard()) {
  cfg_.validate();
  lcg_ = normalize_adjacency(build_lcg(topology_));
  Rng rng(seed);
  ed_ = make_dynamic_extractor(cfg_.frontend, params_, rng);
  ev_ = make_visual_extractor(cfg_.frontend, params_, rng);
  const BranchConfig bc = cfg_.branch_config();
  for (GraphKind kind : cfg_.enabled_graphs()) {
    const std::string prefix = "branch." + std::string(to_string(kind));
    if (kind == GraphKind::kLcg) lcg_lift_ = make_linear(params_, prefix + ".lift", 2, bc.channels, rng);
    branches_.push_back(make_branch(kind, bc, params_, rng, prefix));
  }
  fusion_spec_ = cfg_.fusion_spec();
  if (fusion_spec_) fusion_ = make_fusion(*fusion_spec_, params_, rng);
  backend_ = make_backend(cfg_.backend, cfg_.frontend.visual_dim, params_, rng);
}

std::size_t LipModel::graph_param_count() const {
  return params_.count("branch.") + params_.count("fusion.");
}

Tensor normalized_coordinate_nodes(const Tensor& coords, double frame_size) {
  if (coords.rank() != 4 || coords.dim(3) != 2) {
    throw DimensionError("coords must be [B,T,N,2], got " + shape_str(coords.shape()));
  }
  std::vector<double> v(coords.data().begin(), coords.data().end());
  for (auto& x : v) x = 2.0 * x / frame_size - 1.0;
  return permute(Tensor(coords.shape(), std::move(v)), {0, 2, 1, 3});
}

std::vector<AdjacencyMatrix> LipModel::adjacency(GraphKind kind, const ClipBatch& batch,
                                                 const Tensor& sampled_nodes) const {
  std::vector<AdjacencyMatrix> out;
  switch (kind) {
    case GraphKind::kLcg:
      out.push_back(lcg_);
      break;
    case GraphKind::kDag: {
      const std::size_t t_len = batch.coords.dim(1);
      const std::size_t n = batch.coords.dim(2);
      const std::size_t per = t_len * n * 2;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto src = batch.coords.data().subspan(b * per, per);
        const Tensor c({t_len, n, 2}, std::vector<double>(src.begin(), src.end()));
        out.push_back(build_dag(c, cfg_.dag_epsilon, batch.clip_ids.empty() ? "" : batch.clip_ids[b]));
      }
      break;
    }
    case GraphKind::kSag:
      if (!batch.sag.empty()) {
        if (batch.sag.size() != batch.size()) {
          throw DimensionError("batch carries " + std::to_string(batch.sag.size()) + " similarity graphs for " +
                               std::to_string(batch.size()) + " clips");
        }
        return batch.sag;
      }
      for (std::size_t b = 0; b < batch.size(); ++b) {
        out.push_back(build_sag(time_mean_node_features(sampled_nodes, b)));
      }
      break;
  }
  return out;
}

std::vector<AdjacencyMatrix> LipModel::similarity_graphs(const ClipBatch& batch) const {
  NoGradGuard no_grad;
  const Tensor dyn = extract_dynamic(batch.frames, ed_);
  const Tensor sampled = sample_node_features(dyn, batch.coords, batch.frame_size);
  ClipBatch fresh = batch;
  fresh.sag.clear();
  return adjacency(GraphKind::kSag, fresh, sampled);
}

ForwardResult LipModel::forward(const ClipBatch& batch) const {
  if (batch.size() == 0) throw UsageError("forward on an empty batch");
  if (batch.frames.rank() != 5 || batch.frames.dim(0) != batch.size() ||
      batch.frames.dim(3) != cfg_.frontend.frame_px || batch.frames.dim(4) != cfg_.frontend.frame_px) {
    throw DimensionError("batch frames " + shape_str(batch.frames.shape()) +
                         " do not match the configured frame size");
  }
  ForwardResult res;
  const Tensor dyn = extract_dynamic(batch.frames, ed_);
  res.trace.emplace_back("frontend.dynamic", dyn);
  const Tensor vis = extract_visual(dyn, ev_);
  res.trace.emplace_back("frontend.visual", vis);

  Tensor merged = vis;
  if (!branches_.empty()) {
    Tensor sampled;
    if (cfg_.use_dag || cfg_.use_sag) {
      sampled = sample_node_features(dyn, batch.coords, batch.frame_size);
      res.trace.emplace_back("graph.nodes", sampled);
    }
    std::vector<Tensor> feats;
    for (const auto& br : branches_) {
      Tensor nodes = sampled;
      if (br.kind == GraphKind::kLcg) {
        nodes = linear(normalized_coordinate_nodes(batch.coords, batch.frame_size), *lcg_lift_);
      }
      const auto adj = adjacency(br.kind, batch, sampled);
      feats.push_back(run_branch(nodes, adj, br));
      res.trace.emplace_back("branch." + std::string(to_string(br.kind)), feats.back());
    }
    const Tensor graph = fusion_spec_ ? fuse(*fusion_spec_, fusion_, feats) : feats.front();
    res.trace.emplace_back("fusion", graph);
    merged = merge_with_visual(graph, vis);
  }
  const Tensor agg = aggregate(merged, backend_);
  res.trace.emplace_back("backend", agg);
  res.logits = pool_and_classify(agg, backend_);
  res.trace.emplace_back("logits", res.logits);
  return res;
}

Tensor LipModel::loss(const ClipBatch& batch, ForwardResult* result) const {
  ForwardResult r = forward(batch);
  Tensor l = label_smoothed_ce(r.logits, batch.labels, cfg_.backend.smoothing);
  if (result) *result = std::move(r);
  return l;
}

}  // namespace lipdyn
