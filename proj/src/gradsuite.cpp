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

#include "lipdyn/gradsuite.hpp"

#include <cmath>
#include <random>
#include <utility>

#include "lipdyn/backend.hpp"
#include "lipdyn/errors.hpp"
#include "lipdyn/fusion.hpp"
#include "lipdyn/gradcheck.hpp"
#include "lipdyn/graphs.hpp"
#include "lipdyn/model.hpp"
#include "lipdyn/ops.hpp"
#include "lipdyn/stmgcn.hpp"
#include "lipdyn/synth.hpp"

namespace lipdyn {

namespace {

constexpr double kStep = 1e-5;
// Entries probed per parameter of the full model.
constexpr std::size_t kModelEntries = 8;

using Leaves = std::vector<std::pair<std::string, Tensor>>;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(const Shape& shape, double sd = 1.0) {
    std::normal_distribution<double> dist(0.0, sd);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng_);
    return Tensor(shape, std::move(v));
  }
  Tensor leaf(const Shape& shape, double sd = 1.0) {
    Tensor t = normal(shape, sd);
    t.set_requires_grad(true);
    return t;
  }
  /// Entries bounded away from zero so ReLU kinks stay out of reach of the step.
  Tensor leaf_off_zero(const Shape& shape) {
    std::uniform_real_distribution<double> mag(0.1, 1.5);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = sign(rng_) ? mag(rng_) : -mag(rng_);
    return Tensor(shape, std::move(v), true);
  }
  /// Row-normalized random adjacency with positive entries.
  AdjacencyMatrix adjacency(std::size_t n) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> w(n * n);
    for (auto& x : w) x = u(rng_);
    return normalize_adjacency({Tensor({n, n}, std::move(w)), GraphKind::kDag, false});
  }
  std::uint64_t next() { return rng_(); }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
};

/// Scalar probe sum(y * w) with fixed random weights, so every output entry
/// contributes with its own coefficient.
Tensor probe(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

struct Check {
  std::function<Tensor()> loss;
  Leaves leaves;
  std::size_t max_entries = 0;
};

using Builder = std::function<Check(Gen&)>;

Check unary_check(Gen& g, UnaryOp op) {
  const Shape s{3, 4};
  Tensor x = op == UnaryOp::kRelu ? g.leaf_off_zero(s) : g.leaf(s);
  Tensor w = g.normal(s);
  return {[=] { return probe(pointwise(x, op), w); }, {{"x", x}}};
}

Check binary_check(Gen& g, BinaryOp op) {
  Tensor a = g.leaf({2, 3, 4});
  Tensor b = g.leaf({3, 1});
  Tensor w = g.normal({2, 3, 4});
  return {[=] { return probe(pointwise(a, b, op), w); }, {{"a", a}, {"b", b}}};
}

ModelConfig tiny_model_config() {
  ModelConfig m;
  m.frontend.dyn_channels = 3;
  m.frontend.visual_dim = 6;
  m.frontend.frame_px = 8;
  m.frontend.dyn_kernel = {3, 3, 3};
  m.frontend.visual_channels1 = 3;
  m.frontend.visual_channels2 = 4;
  m.branch_layers = 1;
  m.backend.dilations = {1, 2};
  m.backend.classes = 3;
  m.backend.head_hidden = 5;
  m.fusion_mode = "composite";
  return m;
}

std::vector<std::pair<std::string, Builder>> suite() {
  std::vector<std::pair<std::string, Builder>> s;
  s.emplace_back("relu", [](Gen& g) { return unary_check(g, UnaryOp::kRelu); });
  s.emplace_back("sigmoid", [](Gen& g) { return unary_check(g, UnaryOp::kSigmoid); });
  s.emplace_back("tanh", [](Gen& g) { return unary_check(g, UnaryOp::kTanh); });
  s.emplace_back("add", [](Gen& g) { return binary_check(g, BinaryOp::kAdd); });
  s.emplace_back("sub", [](Gen& g) { return binary_check(g, BinaryOp::kSub); });
  s.emplace_back("mul", [](Gen& g) { return binary_check(g, BinaryOp::kMul); });
  s.emplace_back("scale", [](Gen& g) {
    Tensor x = g.leaf({5});
    Tensor w = g.normal({5});
    return Check{[=] { return probe(scale(x, -1.7), w); }, {{"x", x}}};
  });
  s.emplace_back("reshape", [](Gen& g) {
    Tensor x = g.leaf({2, 6});
    Tensor w = g.normal({3, 4});
    return Check{[=] { return probe(reshape(x, {3, 4}), w); }, {{"x", x}}};
  });
  s.emplace_back("permute", [](Gen& g) {
    Tensor x = g.leaf({2, 3, 4});
    Tensor w = g.normal({4, 2, 3});
    return Check{[=] { return probe(permute(x, {2, 0, 1}), w); }, {{"x", x}}};
  });
  s.emplace_back("concat", [](Gen& g) {
    Tensor a = g.leaf({2, 3});
    Tensor b = g.leaf({2, 2});
    Tensor w = g.normal({2, 5});
    return Check{[=] { return probe(concat({a, b}, 1), w); }, {{"a", a}, {"b", b}}};
  });
  s.emplace_back("slice", [](Gen& g) {
    Tensor x = g.leaf({3, 5});
    Tensor w = g.normal({3, 2});
    return Check{[=] { return probe(slice(x, 1, 1, 3), w); }, {{"x", x}}};
  });
  s.emplace_back("sum", [](Gen& g) {
    Tensor x = g.leaf({3, 2});
    return Check{[=] { return scale(sum(x), 0.5); }, {{"x", x}}};
  });
  s.emplace_back("mean", [](Gen& g) {
    Tensor x = g.leaf({2, 3, 4});
    Tensor w = g.normal({2, 4});
    return Check{[=] { return probe(mean(x, 1), w); }, {{"x", x}}};
  });
  s.emplace_back("softmax", [](Gen& g) {
    Tensor x = g.leaf({3, 4});
    Tensor w = g.normal({3, 4});
    return Check{[=] { return probe(softmax(x, 1), w); }, {{"x", x}}};
  });
  s.emplace_back("matmul", [](Gen& g) {
    Tensor a = g.leaf({2, 3, 4});
    Tensor b = g.leaf({4, 5});
    Tensor w = g.normal({2, 3, 5});
    return Check{[=] { return probe(matmul(a, b), w); }, {{"a", a}, {"b", b}}};
  });
  s.emplace_back("linear", [](Gen& g) {
    Tensor x = g.leaf({2, 3, 4});
    Linear l{g.leaf({4, 5}), g.leaf({5})};
    Tensor w = g.normal({2, 3, 5});
    return Check{[=] { return probe(linear(x, l), w); }, {{"x", x}, {"weight", l.weight}, {"bias", l.bias}}};
  });
  s.emplace_back("conv1d_temporal", [](Gen& g) {
    Tensor x = g.leaf({2, 3, 7});
    Tensor k = g.leaf({4, 3, 3});
    Tensor b = g.leaf({4});
    Tensor w = g.normal({2, 4, 7});
    return Check{[=] { return probe(conv1d_temporal(x, k, 2, b), w); }, {{"x", x}, {"kernel", k}, {"bias", b}}};
  });
  s.emplace_back("conv1d_channels_last", [](Gen& g) {
    Tensor x = g.leaf({2, 3, 6, 3});
    Tensor k = g.leaf({2, 3, 5});
    Tensor b = g.leaf({2});
    Tensor w = g.normal({2, 3, 6, 2});
    return Check{[=] { return probe(conv1d_channels_last(x, k, 1, b), w); },
                 {{"x", x}, {"kernel", k}, {"bias", b}}};
  });
  s.emplace_back("conv3d_local", [](Gen& g) {
    Tensor x = g.leaf({2, 2, 4, 5, 6});
    Tensor k = g.leaf({3, 2, 3, 3, 5});
    Tensor b = g.leaf({3});
    Tensor w = g.normal({2, 3, 4, 5, 6});
    return Check{[=] { return probe(conv3d_local(x, k, b), w); }, {{"x", x}, {"kernel", k}, {"bias", b}}};
  });
  s.emplace_back("conv2d", [](Gen& g) {
    Tensor x = g.leaf({2, 2, 5, 6});
    Tensor k = g.leaf({3, 2, 3, 3});
    Tensor b = g.leaf({3});
    Tensor w = g.normal({2, 3, 3, 3});
    return Check{[=] { return probe(conv2d(x, k, 2, b), w); }, {{"x", x}, {"kernel", k}, {"bias", b}}};
  });
  s.emplace_back("conv2d_frames", [](Gen& g) {
    Tensor x = g.leaf({2, 2, 3, 4, 4});
    Tensor k = g.leaf({3, 2, 3, 3});
    Tensor b = g.leaf({3});
    Tensor w = g.normal({6, 3, 2, 2});
    return Check{[=] { return probe(conv2d_frames(x, k, 2, b), w); }, {{"x", x}, {"kernel", k}, {"bias", b}}};
  });
  s.emplace_back("avg_pool2d", [](Gen& g) {
    Tensor x = g.leaf({2, 2, 4, 6});
    Tensor w = g.normal({2, 2, 2, 3});
    return Check{[=] { return probe(avg_pool2d(x, 2), w); }, {{"x", x}}};
  });
  s.emplace_back("sample_node_features", [](Gen& g) {
    const std::size_t n = kLipNodes;
    Tensor feat = g.leaf({2, 3, 4, 6, 6});
    Tensor coords = g.normal({2, 4, n, 2});
    auto c = coords.mutable_data();
    std::uniform_real_distribution<double> u(0.0, 7.9);
    for (auto& v : c) v = u(g.rng());
    Tensor w = g.normal({2, n, 4, 3});
    return Check{[=] { return probe(sample_node_features(feat, coords, 8.0), w); }, {{"feat", feat}}};
  });
  s.emplace_back("gru_scan", [](Gen& g) {
    Tensor x = g.leaf({2, 5, 3});
    Tensor wih = g.leaf({12, 3}, 0.5);
    Tensor whh = g.leaf({12, 4}, 0.5);
    Tensor bih = g.leaf({12}, 0.5);
    Tensor bhh = g.leaf({12}, 0.5);
    Tensor w = g.normal({2, 5, 4});
    const bool reverse = g.next() % 2 == 1;
    return Check{[=] { return probe(gru_scan(x, wih, whh, bih, bhh, reverse), w); },
                 {{"x", x}, {"w_ih", wih}, {"w_hh", whh}, {"b_ih", bih}, {"b_hh", bhh}}};
  });
  s.emplace_back("sgc", [](Gen& g) {
    Tensor f = g.leaf({2, 5, 3, 4});
    Tensor wt = g.leaf({4, 4});
    std::vector<AdjacencyMatrix> adj{g.adjacency(5), g.adjacency(5)};
    Tensor w = g.normal({2, 5, 3, 4});
    return Check{[=] { return probe(sgc(f, adj, wt, UnaryOp::kTanh), w); }, {{"f", f}, {"w", wt}}};
  });
  s.emplace_back("stgcn_layer", [](Gen& g) {
    BranchConfig bc;
    bc.channels = 3;
    bc.layers = 1;
    bc.out_dim = 4;
    ModelParams params;
    const GraphBranch br = make_branch(GraphKind::kDag, bc, params, g.rng(), "b");
    Tensor f = g.leaf({2, 5, 4, 3});
    std::vector<AdjacencyMatrix> adj{g.adjacency(5)};
    Tensor w = g.normal({2, 5, 4, 3});
    Leaves leaves = params.entries();
    leaves.emplace_back("f", f);
    const STGCNLayerParams layer = br.layers.front();
    return Check{[=] { return probe(stgcn_layer(f, adj, layer), w); }, leaves};
  });
  s.emplace_back("run_branch", [](Gen& g) {
    BranchConfig bc;
    bc.channels = 3;
    bc.layers = 2;
    bc.out_dim = 4;
    ModelParams params;
    const GraphBranch br = make_branch(GraphKind::kSag, bc, params, g.rng(), "b");
    Tensor f = g.leaf({2, 5, 4, 3});
    std::vector<AdjacencyMatrix> adj{g.adjacency(5), g.adjacency(5)};
    Tensor w = g.normal({2, 4, 4});
    Leaves leaves = params.entries();
    leaves.emplace_back("f", f);
    return Check{[=] { return probe(run_branch(f, adj, br), w); }, leaves};
  });
  for (const FusionMode mode :
       {FusionMode::kCat2, FusionMode::kSum2, FusionMode::kCat3, FusionMode::kWsum3, FusionMode::kComposite}) {
    s.emplace_back("fuse_" + std::string(to_string(mode)), [mode](Gen& g) {
      const std::size_t k = fusion_operand_count(mode);
      FusionSpec spec;
      spec.mode = mode;
      spec.reduce_dim = 4;
      spec.operands = k == 2 ? std::vector<GraphKind>{GraphKind::kDag, GraphKind::kSag}
                             : std::vector<GraphKind>{GraphKind::kLcg, GraphKind::kDag, GraphKind::kSag};
      ModelParams params;
      const FusionParams fp = make_fusion(spec, params, g.rng());
      std::vector<Tensor> feats;
      Leaves leaves = params.entries();
      for (std::size_t i = 0; i < k; ++i) {
        feats.push_back(g.leaf({2, 3, 4}));
        leaves.emplace_back("f" + std::to_string(i), feats.back());
      }
      Tensor w = g.normal({2, 3, 4});
      return Check{[=] { return probe(fuse(spec, fp, feats), w); }, leaves};
    });
  }
  s.emplace_back("merge_with_visual", [](Gen& g) {
    Tensor a = g.leaf({2, 3, 4});
    Tensor b = g.leaf({2, 3, 4});
    Tensor w = g.normal({2, 3, 4});
    return Check{[=] { return probe(merge_with_visual(a, b), w); }, {{"graph", a}, {"visual", b}}};
  });
  s.emplace_back("backend", [](Gen& g) {
    BackendConfig bc;
    bc.dilations = {1, 2};
    bc.classes = 3;
    bc.head_hidden = 5;
    bc.block_activation = UnaryOp::kTanh;
    ModelParams params;
    const BackendParams bp = make_backend(bc, 4, params, g.rng());
    Tensor x = g.leaf({2, 6, 4});
    Tensor w = g.normal({2, 3});
    Leaves leaves = params.entries();
    leaves.emplace_back("x", x);
    return Check{[=] { return probe(pool_and_classify(aggregate(x, bp), bp), w); }, leaves};
  });
  s.emplace_back("label_smoothed_ce", [](Gen& g) {
    Tensor logits = g.leaf({4, 5});
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(g.next() % 5));
    return Check{[=] { return label_smoothed_ce(logits, labels, 0.1); }, {{"logits", logits}}};
  });
  s.emplace_back("full_model", [](Gen& g) {
    SynthConfig sc;
    sc.classes = 3;
    sc.speakers = 3;
    sc.test_speakers = 1;
    sc.clips_per = 2;
    sc.val_per = 0;
    sc.frames = 7;
    sc.frame_px = 8;
    sc.class_distance_floor = 0.1;
    sc.seed = g.next();
    const Dataset ds = generate_dataset(sc);
    auto model = std::make_shared<LipModel>(tiny_model_config(), g.next());
    ClipBatch batch = make_batch(ds.train, 0, 3);
    batch.sag = model->similarity_graphs(batch);
    return Check{[model, batch] { return model->loss(batch); }, model->params().entries(), kModelEntries};
  });
  return s;
}

}  // namespace

std::vector<std::string> gradcheck_suite_names() {
  std::vector<std::string> names;
  for (const auto& [name, b] : suite()) names.push_back(name);
  return names;
}

std::vector<GradcheckCase> run_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed, double tolerance,
                                               const std::function<void(const GradcheckCase&)>& on_case) {
  const auto checks = suite();
  std::vector<GradcheckCase> out;
  for (std::size_t i = 0; i < seeds; ++i) {
    const std::uint64_t seed = base_seed + i;
    for (std::size_t k = 0; k < checks.size(); ++k) {
      Gen gen(derive_seed(seed, k));
      const Check check = checks[k].second(gen);
      const GradcheckReport r = gradcheck_params(check.loss, check.leaves, kStep, check.max_entries, seed);
      GradcheckCase c{checks[k].first, seed, r.max_rel_error, r.entries_checked, r.max_rel_error < tolerance};
      if (on_case) on_case(c);
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace lipdyn
