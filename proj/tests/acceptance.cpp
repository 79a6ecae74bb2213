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

// End-to-end acceptance run. Prints one PASS or FAIL line per criterion
// and exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lipdyn/backend.hpp"
#include "lipdyn/frontend.hpp"
#include "lipdyn/fusion.hpp"
#include "lipdyn/gradsuite.hpp"
#include "lipdyn/graphs.hpp"
#include "lipdyn/io.hpp"
#include "lipdyn/ops.hpp"
#include "lipdyn/stmgcn.hpp"
#include "lipdyn/training.hpp"
#include "oracles.hpp"

namespace {

using namespace lipdyn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void note(const std::string& msg) {
  std::printf("    %s\n", msg.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string summary;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      note("violated: " + what);
    }
  }
};

// ---------------------------------------------------------------------------
// 1. Gradient suite

Outcome gradient_suite() {
  Outcome out;
  const auto t0 = Clock::now();
  const auto cases = run_gradcheck_suite(20, 0, 1e-4);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  std::size_t failed = 0;
  for (const auto& c : cases) {
    if (c.max_rel_error >= worst) {
      worst = c.max_rel_error;
      worst_name = c.name;
    }
    if (!c.passed) {
      ++failed;
      note(c.name + " seed " + std::to_string(c.seed) + " rel error " + fmt("%.3e", c.max_rel_error));
    }
  }
  const auto names = gradcheck_suite_names();
  out.require(std::find(names.begin(), names.end(), "full_model") != names.end(), "full model in suite");
  out.require(failed == 0, "every check below 1e-4");
  out.require(secs < 120.0, "runtime under 2 min");
  out.summary = std::to_string(names.size()) + " checks x 20 seeds, worst " + fmt("%.2e", worst) + " (" +
                worst_name + "), " + fmt("%.1f", secs) + " s";
  return out;
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalence

Outcome oracle_equivalence() {
  Outcome out;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> nodes(2, 8), small(1, 4);
  double sgc_err = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = nodes(rng), b = small(rng), t = small(rng), c = small(rng);
    const Tensor f = oracle::random_tensor({b, n, t, c}, rng);
    const Tensor w = oracle::random_tensor({c, c}, rng);
    std::vector<AdjacencyMatrix> adj;
    const std::size_t count = i % 2 ? b : 1;
    for (std::size_t k = 0; k < count; ++k) adj.push_back(oracle::random_adjacency(n, rng));
    const UnaryOp act = std::array{UnaryOp::kRelu, UnaryOp::kTanh, UnaryOp::kIdentity}[i % 3];
    sgc_err = std::max(sgc_err, oracle::max_abs_diff(sgc(f, adj, w, act), oracle::sgc(f, adj, w, act)));
  }
  out.require(sgc_err <= 1e-9, "sgc within 1e-9");

  double conv_err = 0.0;
  auto track = [&](const Tensor& a, const Tensor& b) { conv_err = std::max(conv_err, oracle::max_abs_diff(a, b)); };
  for (int i = 0; i < 10; ++i) {
    const std::size_t b = small(rng), c = small(rng), co = small(rng) + 1, t = 3 + small(rng) * 2;
    const std::size_t dil = 1 + static_cast<std::size_t>(i % 3);
    const Tensor bias = oracle::random_tensor({co}, rng);
    {
      const Tensor x = oracle::random_tensor({b, c, t}, rng), k = oracle::random_tensor({co, c, 3}, rng);
      track(conv1d_temporal(x, k, dil, bias), oracle::conv1d_temporal(x, k, dil, bias));
    }
    {
      const Tensor x = oracle::random_tensor({b, 3, t, c}, rng), k = oracle::random_tensor({co, c, 5}, rng);
      track(conv1d_channels_last(x, k, dil, bias), oracle::conv1d_channels_last(x, k, dil, bias));
    }
    {
      const std::size_t w = 3 + small(rng) * 3;
      const Tensor x = oracle::random_tensor({b, c, t, 6, w}, rng), k = oracle::random_tensor({co, c, 3, 5, 5}, rng);
      track(conv3d_local(x, k, bias), oracle::conv3d_local(x, k, bias));
      track(conv3d_local(x, k), oracle::conv3d_local(x, k, Tensor()));
    }
    {
      const std::size_t stride = 1 + static_cast<std::size_t>(i % 2);
      const Tensor x = oracle::random_tensor({b, c, 7, 8}, rng), k = oracle::random_tensor({co, c, 3, 3}, rng);
      track(conv2d(x, k, stride, bias), oracle::conv2d(x, k, stride, bias));
      const Tensor v = oracle::random_tensor({b, c, 3, 8, 8}, rng);
      track(conv2d_frames(v, k, stride, bias), oracle::conv2d_frames(v, k, stride, bias));
    }
    {
      const Tensor a = oracle::random_tensor({5, 3 + small(rng)}, rng);
      const Tensor m = oracle::random_tensor({a.dim(1), 4}, rng);
      track(matmul(a, m), oracle::matmul(a, m));
    }
  }
  out.require(conv_err <= 1e-12, "conv ops within 1e-12");
  out.summary = "sgc max err " + fmt("%.1e", sgc_err) + " over 50 instances, conv max err " + fmt("%.1e", conv_err);
  return out;
}

// ---------------------------------------------------------------------------
// 3. Graph invariants

double mean_distance(const Tensor& coords, std::size_t i, std::size_t j) {
  const std::size_t t_len = coords.dim(0), n = coords.dim(1);
  double d = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* p = coords.data().data() + t * n * 2;
    d += std::hypot(p[2 * i] - p[2 * j], p[2 * i + 1] - p[2 * j + 1]);
  }
  return d / static_cast<double>(t_len);
}

double max_row_error(const AdjacencyMatrix& m) {
  double err = 0.0;
  for (std::size_t i = 0; i < m.nodes(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.nodes(); ++j) s += m.at(i, j);
    err = std::max(err, std::abs(s - 1.0));
  }
  return err;
}

Outcome graph_invariants() {
  Outcome out;
  SynthConfig sc;
  sc.speakers = 5;
  sc.clips_per = 2;
  sc.val_per = 0;
  sc.seed = 33;
  const Dataset ds = generate_dataset(sc);
  std::vector<const SyntheticClip*> clips;
  for (const auto* split : {&ds.train, &ds.test}) {
    for (const auto& c : *split) clips.push_back(&c);
  }
  clips.resize(std::min<std::size_t>(clips.size(), 100));
  out.require(clips.size() == 100, "100 clips");

  const LipModel model(ModelConfig{}, 5);
  const AdjacencyMatrix lcg = build_lcg(LipTopology::standard());
  std::size_t min_deg = 99, max_deg = 0;
  for (std::size_t i = 0; i < lcg.nodes(); ++i) {
    std::size_t deg = 0;
    for (std::size_t j = 0; j < lcg.nodes(); ++j) deg += lcg.at(i, j) != 0.0;
    min_deg = std::min(min_deg, deg);
    max_deg = std::max(max_deg, deg);
  }
  out.require(min_deg >= 3 && max_deg <= 5, "LCG degrees in [3,5]");

  double row_err = max_row_error(normalize_adjacency(lcg));
  double sym_err = 0.0, scale_err = 0.0;
  std::size_t monotone_violations = 0;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> factor(0.05, 20.0);
  for (const SyntheticClip* clip : clips) {
    const Tensor& coords = clip->landmarks.coords;
    const AdjacencyMatrix raw = dag_weights(coords);
    std::vector<std::pair<double, double>> pairs;  // (distance, weight)
    for (std::size_t i = 0; i < kLipNodes; ++i) {
      for (std::size_t j = 0; j < kLipNodes; ++j) {
        if (i != j) pairs.emplace_back(mean_distance(coords, i, j), raw.at(i, j));
      }
    }
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t k = 1; k < pairs.size(); ++k) {
      const bool farther = pairs[k].first > pairs[k - 1].first;
      if (farther && !(pairs[k].second < pairs[k - 1].second)) ++monotone_violations;
    }
    row_err = std::max(row_err, max_row_error(build_dag(coords)));

    const ClipBatch batch = make_batch(std::vector<SyntheticClip>{*clip}, 0, 1);
    Tensor feats;
    {
      NoGradGuard guard;
      const Tensor dyn = extract_dynamic(batch.frames, model.dynamic_extractor());
      feats = time_mean_node_features(sample_node_features(dyn, batch.coords, batch.frame_size), 0);
    }
    const std::size_t n = feats.dim(0), c = feats.dim(1);
    const Tensor sim = cosine_similarity(feats);
    Tensor scaled = feats.clone();
    for (std::size_t i = 0; i < n; ++i) {
      const double s = factor(rng);
      for (std::size_t k = 0; k < c; ++k) scaled.mutable_data()[i * c + k] *= s;
    }
    const Tensor sim2 = cosine_similarity(scaled);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        sym_err = std::max(sym_err, std::abs(sim.data()[i * n + j] - sim.data()[j * n + i]));
        scale_err = std::max(scale_err, std::abs(sim.data()[i * n + j] - sim2.data()[i * n + j]));
      }
    }
    row_err = std::max(row_err, max_row_error(build_sag(feats)));
  }
  out.require(monotone_violations == 0, "DAG weights strictly decreasing in mean distance");
  out.require(sym_err <= 1e-12, "SAG similarity symmetric within 1e-12");
  out.require(scale_err <= 1e-12, "SAG similarity scale invariant within 1e-12");
  out.require(row_err <= 1e-9, "normalized rows sum to 1 within 1e-9");
  out.summary = "LCG degree " + std::to_string(min_deg) + ".." + std::to_string(max_deg) + ", DAG violations " +
                std::to_string(monotone_violations) + ", SAG sym " + fmt("%.1e", sym_err) + " scale " +
                fmt("%.1e", scale_err) + ", row err " + fmt("%.1e", row_err);
  return out;
}

// ---------------------------------------------------------------------------
// 4. Loss and metric fidelity

Outcome loss_fidelity() {
  Outcome out;
  double uniform_err = 0.0;
  for (std::size_t classes : {2u, 10u, 37u}) {
    for (double eps : {0.0, 0.1, 0.3}) {
      std::vector<int> labels;
      for (std::size_t i = 0; i < 4; ++i) labels.push_back(static_cast<int>((i * 7) % classes));
      const Tensor l = label_smoothed_ce(Tensor::zeros({4, classes}), labels, eps);
      uniform_err = std::max(uniform_err, std::abs(l.item() - std::log(static_cast<double>(classes))));
    }
  }
  out.require(uniform_err <= 1e-12, "uniform logits give ln C");

  std::mt19937_64 rng(4);
  double plain_err = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Tensor logits = oracle::random_tensor({5, 6}, rng, -4.0, 4.0);
    std::vector<int> labels;
    double expected = 0.0;
    for (std::size_t r = 0; r < 5; ++r) {
      labels.push_back(static_cast<int>(rng() % 6));
      double z = 0.0;
      for (std::size_t c = 0; c < 6; ++c) z += std::exp(logits.data()[r * 6 + c]);
      expected += std::log(z) - logits.data()[r * 6 + static_cast<std::size_t>(labels.back())];
    }
    plain_err = std::max(plain_err, std::abs(label_smoothed_ce(logits, labels, 0.0).item() - expected / 5.0));
  }
  out.require(plain_err <= 1e-12, "eps=0 equals plain cross entropy");

  std::vector<EvalRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back({"a" + std::to_string(i), "A", 3, 3});
  recs.push_back({"b0", "B", 3, 1});
  const double acc = accuracy(recs), macc = mean_accuracy(recs);
  out.require(acc == 10.0 / 11.0, "Acc 10/11");
  out.require(macc == 0.5, "mAcc 0.5");
  out.summary = "ln C err " + fmt("%.1e", uniform_err) + ", plain CE err " + fmt("%.1e", plain_err) + ", Acc " +
                fmt("%.4f", acc) + " mAcc " + fmt("%.2f", macc);
  return out;
}

// ---------------------------------------------------------------------------
// 5. Fusion parity

Outcome fusion_parity() {
  Outcome out;
  const std::size_t dim = ModelConfig{}.frontend.visual_dim;
  std::mt19937_64 rng(5);
  const std::vector<GraphKind> three{GraphKind::kLcg, GraphKind::kDag, GraphKind::kSag};
  const std::vector<GraphKind> two{GraphKind::kDag, GraphKind::kSag};
  std::map<FusionMode, std::size_t> counts;
  for (FusionMode mode :
       {FusionMode::kCat2, FusionMode::kSum2, FusionMode::kCat3, FusionMode::kWsum3, FusionMode::kComposite}) {
    const std::size_t k = fusion_operand_count(mode);
    FusionSpec spec{mode, k == 2 ? two : three, dim};
    ModelParams params;
    const FusionParams fp = make_fusion(spec, params, rng);
    std::vector<Tensor> feats;
    for (std::size_t i = 0; i < k; ++i) feats.push_back(oracle::random_tensor({2, 5, dim}, rng));
    const Tensor y = fuse(spec, fp, feats);
    out.require(y.shape() == (Shape{2, 5, dim}), std::string(to_string(mode)) + " output shape");
    out.require(params.count() == fusion_param_count(mode, dim), std::string(to_string(mode)) + " param count");
    counts[mode] = params.count();

    ExperimentConfig cfg;
    cfg.model.fusion_mode = std::string(to_string(mode));
    if (k == 2) cfg.model.use_lcg = false;
    const LipModel model(cfg.model, 1);
    out.require(model.param_count() > 0, std::string(to_string(mode)) + " model constructible");
  }

  ModelParams params;
  const Linear red = make_linear(params, "r", 2 * dim, dim, rng);
  const Tensor a = oracle::random_tensor({2, 5, dim}, rng), b = oracle::random_tensor({2, 5, dim}, rng),
               c = oracle::random_tensor({2, 5, dim}, rng);
  const Tensor composite = fuse_composite(a, b, c, red);
  const Tensor manual = add(a, linear(concat({b, c}, 2), red));
  bool bit_equal = composite.shape() == manual.shape();
  for (std::size_t i = 0; bit_equal && i < manual.numel(); ++i) bit_equal = composite.data()[i] == manual.data()[i];
  out.require(bit_equal, "composite bit-equals sum of cat");

  out.require(counts[FusionMode::kSum2] == 0, "sum adds no parameters");
  out.require(counts[FusionMode::kSum2] < counts[FusionMode::kCat2], "sum < cat");
  out.require(counts[FusionMode::kCat2] < counts[FusionMode::kWsum3], "cat < wsum");
  out.require(counts[FusionMode::kCat3] < counts[FusionMode::kWsum3], "cat3 < wsum3");
  out.summary = "extra params sum2 " + std::to_string(counts[FusionMode::kSum2]) + ", cat2 " +
                std::to_string(counts[FusionMode::kCat2]) + ", cat3 " + std::to_string(counts[FusionMode::kCat3]) +
                ", wsum3 " + std::to_string(counts[FusionMode::kWsum3]) + ", composite " +
                std::to_string(counts[FusionMode::kComposite]) + (bit_equal ? ", composite bit-equal" : "");
  return out;
}

// ---------------------------------------------------------------------------
// 6 and 7. Ablation and robustness

struct SeedRun {
  std::uint64_t seed = 0;
  double base_acc = 0.0;
  double full_acc = 0.0;
  double full_train_acc = 0.0;
  std::unique_ptr<LipModel> full_model;
  ExperimentConfig full_cfg;
};

struct Experiments {
  Dataset data;
  std::vector<SeedRun> runs;
  std::vector<std::size_t> param_counts;
  double seconds = 0.0;
};

Experiments run_experiments() {
  Experiments ex;
  const auto t0 = Clock::now();
  const ExperimentConfig base;
  ex.data = generate_dataset(base.data);
  note("dataset: " + std::to_string(ex.data.train.size()) + " train, " + std::to_string(ex.data.test.size()) +
       " test clips, " + fmt("%.1f", seconds_since(t0)) + " s");
  const auto variants = ablation_variants();
  for (const auto& v : variants) {
    ex.param_counts.push_back(LipModel(variant_config(base, v).model, 0).param_count());
  }
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    SeedRun run;
    run.seed = seed;
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    for (const auto* v : {&variants.front(), &variants.back()}) {
      const ExperimentConfig vc = variant_config(cfg, *v);
      TrainResult tr = train(vc, ex.data);
      const EvalResult test = evaluate(*tr.model, ex.data.test, vc.train.batch_size);
      note("seed " + std::to_string(seed) + " " + v->name + ": train acc " + fmt("%.4f", tr.final_train_acc) +
           ", test acc " + fmt("%.4f", test.acc) + ", " + fmt("%.0f", seconds_since(t0)) + " s elapsed");
      if (v == &variants.front()) {
        run.base_acc = test.acc;
      } else {
        run.full_acc = test.acc;
        run.full_train_acc = tr.final_train_acc;
        run.full_model = std::move(tr.model);
        run.full_cfg = vc;
      }
    }
    ex.runs.push_back(std::move(run));
  }
  ex.seconds = seconds_since(t0);
  return ex;
}

Outcome ablation(const Experiments& ex) {
  Outcome out;
  double base = 0.0, full = 0.0, min_train = 1.0;
  for (const auto& r : ex.runs) {
    base += r.base_acc / static_cast<double>(ex.runs.size());
    full += r.full_acc / static_cast<double>(ex.runs.size());
    min_train = std::min(min_train, r.full_train_acc);
  }
  out.require(full >= base, "full model mean Acc >= baseline");
  out.require(min_train >= 0.99, "full model train accuracy >= 99% on every seed");
  bool increasing = true;
  for (std::size_t i = 1; i < ex.param_counts.size(); ++i) increasing &= ex.param_counts[i] > ex.param_counts[i - 1];
  out.require(increasing, "parameter counts increase across the four variants");
  out.require(ex.seconds < 900.0, "runtime under 15 min");
  std::string counts;
  for (std::size_t c : ex.param_counts) counts += (counts.empty() ? "" : "<") + std::to_string(c);
  out.summary = "mean Acc baseline " + fmt("%.4f", base) + " vs full " + fmt("%.4f", full) + ", min train acc " +
                fmt("%.4f", min_train) + ", params " + counts + ", " + fmt("%.0f", ex.seconds) + " s";
  return out;
}

Outcome robustness(const Experiments& ex) {
  Outcome out;
  const std::vector<std::string> expected{"clean", "+visual_noise", "+landmark_perturbation", "+noise+perturbation"};
  std::size_t favourable = 0;
  std::string detail;
  for (const auto& r : ex.runs) {
    const auto rows = robustness_sweep(*r.full_model, ex.data.test, r.full_cfg);
    std::vector<std::string> names;
    for (const auto& row : rows) {
      names.push_back(row.condition);
      out.require(std::isfinite(row.degradation), "finite degradation");
    }
    out.require(names == expected, "four condition rows");
    if (rows.size() != 4) continue;
    const double visual = rows[1].degradation, landmark = rows[2].degradation;
    note("seed " + std::to_string(r.seed) + ": clean " + fmt("%.4f", rows[0].acc) + ", visual drop " +
         fmt("%.4f", visual) + ", landmark drop " + fmt("%.4f", landmark) + ", both drop " +
         fmt("%.4f", rows[3].degradation));
    if (landmark <= visual) ++favourable;
  }
  out.require(favourable >= 2, "landmark degradation <= visual degradation on >= 2 of 3 seeds");
  out.summary = "landmark <= visual degradation on " + std::to_string(favourable) + " of " +
                std::to_string(ex.runs.size()) + " seeds";
  return out;
}

// ---------------------------------------------------------------------------
// 8. Determinism

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

Outcome determinism(const std::string& cli) {
  Outcome out;
  const fs::path root = fs::temp_directory_path() / "lipdyn_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string tiny =
      " --set data.classes=3 --set model.backend.classes=3 --set data.speakers=3 --set data.clips_per=4"
      " --set data.frames=9 --set train.epochs=2 --set train.batch_size=4";
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "gen-data" + tiny + " --seed 7 --out {}/data"},
      {"train", "train" + tiny + " --seed 3 --data " + (root / "a/gen-data/data").string() + " --out {}/run"},
      {"eval", "eval --checkpoint " + (root / "a/train/run/checkpoint.bin").string() + " --data " +
                   (root / "a/gen-data/data").string() + " --perturb both --out {}/eval"},
      {"robust", "robust --checkpoint " + (root / "a/train/run/checkpoint.bin").string() + " --data " +
                     (root / "a/gen-data/data").string() + " --out {}/robust"},
      {"ablate", "ablate" + tiny + " --set train.epochs=1 --data " + (root / "a/gen-data/data").string() +
                     " --out {}/ablate"},
      {"build-graphs", "build-graphs --landmarks " + (root / "a/gen-data/data/landmarks.jsonl").string() +
                           " --out {}/graphs"},
      {"gradcheck", "gradcheck --seeds 1 --out {}/grad"},
  };
  std::size_t identical = 0;
  for (const auto& [name, args] : commands) {
    std::map<std::string, std::string> first;
    bool ok = true;
    for (const char* copy : {"a", "b"}) {
      const fs::path dir = root / copy / name;
      fs::create_directories(dir);
      std::string a = args;
      for (std::size_t p; (p = a.find("{}")) != std::string::npos;) a.replace(p, 2, dir.string());
      const std::string cmd = "\"" + cli + "\" " + a + " 2>" + (dir / "stderr.txt").string();
      if (std::system(cmd.c_str()) != 0) {
        out.require(false, name + " exited nonzero");
        ok = false;
        break;
      }
      auto files = snapshot(dir);
      files.erase("stderr.txt");
      if (first.empty()) {
        first = std::move(files);
      } else if (files != first) {
        out.require(false, name + " outputs differ between runs");
        ok = false;
      }
    }
    if (ok && !first.empty()) ++identical;
  }
  out.summary = std::to_string(identical) + " of " + std::to_string(commands.size()) +
                " subcommands byte-identical on rerun";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  const std::string cli = argc > 1 ? argv[1] : LIPDYN_CLI_PATH;
  int failed = 0;
  auto report = [&](int id, const char* title, const Outcome& o) {
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, title, o.summary.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  };
  report(1, "gradient suite", gradient_suite());
  report(2, "oracle equivalence", oracle_equivalence());
  report(3, "graph invariants", graph_invariants());
  report(4, "loss and metric fidelity", loss_fidelity());
  report(5, "fusion parity", fusion_parity());
  const Experiments ex = run_experiments();
  report(6, "ablation protocol", ablation(ex));
  report(7, "robustness protocol", robustness(ex));
  report(8, "determinism", determinism(cli));
  std::printf("%d of 8 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
