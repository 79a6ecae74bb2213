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

// lipdyn command-line interface.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lipdyn/config.hpp"
#include "lipdyn/errors.hpp"
#include "lipdyn/frontend.hpp"
#include "lipdyn/gradsuite.hpp"
#include "lipdyn/graphs.hpp"
#include "lipdyn/io.hpp"
#include "lipdyn/training.hpp"

namespace {

using lipdyn::ExperimentConfig;
using nlohmann::json;
namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kLoad = 5,
};

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. train.epochs=5 (repeatable)");
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_option("--seed", c.seed, "Run seed");
  cmd->add_flag("--force", c.force, "Write into a non-empty output directory");
}

void log(const std::string& msg) { std::cerr << msg << '\n'; }

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_json(const fs::path& path, const json& j) { lipdyn::atomic_write(path, j.dump(2) + "\n"); }

ExperimentConfig finish(json j, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) lipdyn::apply_override(j, o);
  ExperimentConfig cfg = lipdyn::config_from_json(j);
  cfg.validate();
  return cfg;
}

/// Config file (or `base` when no file is given) plus --set overrides and --seed.
ExperimentConfig resolve(const Common& c, const json& base = json::object()) {
  json j = base;
  if (!c.config.empty()) {
    const fs::path file(c.config);
    j = json::parse(lipdyn::read_file(file), nullptr, false);
    if (j.is_discarded()) throw lipdyn::ConfigError("config file " + fs::absolute(file).string() + " is not valid JSON");
  }
  ExperimentConfig cfg = finish(j, c.overrides);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void begin_output(const Common& c, const ExperimentConfig& cfg) {
  lipdyn::prepare_output_dir(c.out, c.force);
  fs::create_directories(c.out);
  write_json(fs::path(c.out) / "resolved_config.json", lipdyn::to_json(cfg));
}

/// Loads --data, or generates the configured dataset in memory. The data
/// section of the config follows the dataset actually used.
lipdyn::Dataset obtain_dataset(const std::string& data_dir, ExperimentConfig& cfg) {
  if (data_dir.empty()) {
    log("generating dataset in memory");
    return lipdyn::generate_dataset(cfg.data);
  }
  lipdyn::Dataset ds = lipdyn::load_dataset(data_dir);
  cfg.data = ds.config;
  cfg.validate();
  return ds;
}

const std::vector<lipdyn::SyntheticClip>& split_clips(const lipdyn::Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  if (split == "test") return ds.test;
  throw lipdyn::UsageError("unknown split '" + split + "' (expected train, val or test)");
}

lipdyn::Checkpoint load_checkpoint(const std::string& path) {
  if (path.empty()) throw lipdyn::UsageError("--checkpoint is required");
  return lipdyn::read_checkpoint(path);
}

json checkpoint_config(const lipdyn::Checkpoint& ck) {
  json j = json::parse(ck.config_json, nullptr, false);
  if (j.is_discarded()) throw lipdyn::LoadError("checkpoint carries an unreadable config");
  return j;
}

// gen-data

struct GenArgs {
  Common common;
};

int gen_data(const GenArgs& a) {
  ExperimentConfig cfg = resolve(a.common);
  if (a.common.seed) cfg.data.seed = *a.common.seed;
  const lipdyn::Dataset ds = lipdyn::generate_dataset(cfg.data);
  lipdyn::save_dataset(ds, a.common.out, a.common.force);
  write_json(fs::path(a.common.out) / "resolved_config.json", lipdyn::to_json(cfg));
  log("wrote " + std::to_string(ds.train.size()) + " train, " + std::to_string(ds.val.size()) + " val, " +
      std::to_string(ds.test.size()) + " test clips to " + a.common.out);
  return kOk;
}

// build-graphs

struct GraphArgs {
  Common common;
  std::string landmarks;
  std::string clip;
  std::string frames;
  std::string checkpoint;
};

std::string matrix_text(const lipdyn::AdjacencyMatrix& m) {
  std::ostringstream os;
  os.precision(12);
  for (std::size_t i = 0; i < m.nodes(); ++i) {
    for (std::size_t j = 0; j < m.nodes(); ++j) os << (j ? " " : "") << m.at(i, j);
    os << '\n';
  }
  return os.str();
}

json matrix_summary(const lipdyn::AdjacencyMatrix& m) {
  const std::size_t n = m.nodes();
  std::vector<double> row_sums(n, 0.0);
  std::map<std::string, std::size_t> histogram;
  double asym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t degree = 0;
    for (std::size_t j = 0; j < n; ++j) {
      row_sums[i] += m.at(i, j);
      if (m.at(i, j) != 0.0) ++degree;
      asym = std::max(asym, std::abs(m.at(i, j) - m.at(j, i)));
    }
    ++histogram[std::to_string(degree)];
  }
  return {{"normalized", m.normalized},
          {"row_sums", row_sums},
          {"degree_histogram", histogram},
          {"max_asymmetry", asym}};
}

int build_graphs(const GraphArgs& a) {
  if (a.landmarks.empty()) throw lipdyn::UsageError("--landmarks is required");
  json base = json::object();
  lipdyn::Checkpoint ck;
  if (!a.checkpoint.empty()) {
    ck = lipdyn::read_checkpoint(a.checkpoint);
    base = checkpoint_config(ck);
  }
  const ExperimentConfig cfg = resolve(a.common, base);
  const fs::path lm_path(a.landmarks);
  const auto records = lipdyn::read_landmark_file(lm_path);
  if (records.empty()) throw lipdyn::DataError("no landmark records in " + fs::absolute(lm_path).string());
  const lipdyn::LandmarkSequence* seq = &records.front();
  if (!a.clip.empty()) {
    seq = nullptr;
    for (const auto& r : records) {
      if (r.clip_id == a.clip) seq = &r;
    }
    if (seq == nullptr) throw lipdyn::DataError("clip '" + a.clip + "' not in " + fs::absolute(lm_path).string());
  }
  seq->validate();
  const fs::path frames_path =
      a.frames.empty() ? lm_path.parent_path() / "frames" / (seq->clip_id + ".bin") : fs::path(a.frames);
  const lipdyn::Tensor frames = lipdyn::read_tensor_file(frames_path);

  std::unique_ptr<lipdyn::LipModel> model = a.checkpoint.empty()
                                                ? std::make_unique<lipdyn::LipModel>(
                                                      cfg.model, lipdyn::stream_seed(cfg.seed, lipdyn::SeedStream::kInit))
                                                : lipdyn::restore_model(ck, cfg);
  lipdyn::SyntheticClip clip;
  clip.frames = frames;
  clip.landmarks = *seq;
  clip.speaker_id = seq->speaker_id;
  clip.label = seq->label;
  const lipdyn::ClipBatch batch = lipdyn::make_batch(std::vector<lipdyn::SyntheticClip>{clip}, 0, 1);

  begin_output(a.common, cfg);
  const lipdyn::AdjacencyMatrix lcg = lipdyn::build_lcg(lipdyn::LipTopology::standard());
  const lipdyn::AdjacencyMatrix dag = lipdyn::build_dag(seq->coords, lipdyn::kDagEpsilon, seq->clip_id);
  lipdyn::Tensor node_feats;
  {
    lipdyn::NoGradGuard no_grad;
    const lipdyn::Tensor dyn = lipdyn::extract_dynamic(batch.frames, model->dynamic_extractor());
    node_feats = lipdyn::time_mean_node_features(
        lipdyn::sample_node_features(dyn, batch.coords, batch.frame_size), 0);
  }
  const lipdyn::AdjacencyMatrix sag_raw = lipdyn::sag_weights(node_feats);
  const lipdyn::AdjacencyMatrix sag = lipdyn::build_sag(node_feats);

  const fs::path out(a.common.out);
  lipdyn::atomic_write(out / "lcg.txt", matrix_text(lcg));
  lipdyn::atomic_write(out / "dag.txt", matrix_text(dag));
  lipdyn::atomic_write(out / "sag.txt", matrix_text(sag));
  json summary = {{"clip_id", seq->clip_id},
                  {"lcg", matrix_summary(lcg)},
                  {"dag", matrix_summary(dag)},
                  {"sag", matrix_summary(sag)},
                  {"sag_pre_normalization", matrix_summary(sag_raw)}};
  write_json(out / "summary.json", summary);
  log("wrote graphs of clip " + seq->clip_id + " to " + a.common.out);
  return kOk;
}

// train

struct TrainArgs {
  Common common;
  std::string data;
};

int train_cmd(const TrainArgs& a) {
  ExperimentConfig cfg = resolve(a.common);
  const lipdyn::Dataset ds = obtain_dataset(a.data, cfg);
  begin_output(a.common, cfg);
  auto result = lipdyn::train(cfg, ds, [](const lipdyn::EpochMetrics& m) {
    std::string line = "epoch " + std::to_string(m.epoch) + " loss " + fixed(m.train_loss) + " acc " +
                       fixed(m.train_acc);
    if (m.has_val) line += " val_loss " + fixed(m.val_loss) + " val_acc " + fixed(m.val_acc);
    log(line);
  });
  const fs::path out(a.common.out);
  lipdyn::write_checkpoint(out / "checkpoint.bin", lipdyn::make_checkpoint(*result.model, &result.optim, cfg));
  write_json(out / "history.json", lipdyn::history_json(result.history));
  const auto test = lipdyn::evaluate(*result.model, ds.test, cfg.train.batch_size);
  json report = lipdyn::eval_report(test, cfg);
  report["split"] = "test";
  report["train_acc"] = result.final_train_acc;
  report["train_clips"] = result.train_clips;
  write_json(out / "report.json", report);
  log("train acc " + fixed(result.final_train_acc) + ", test acc " + fixed(test.acc) + ", macc " + fixed(test.macc));
  return kOk;
}

// eval

struct EvalArgs {
  Common common;
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  std::string perturb = "none";
};

lipdyn::Perturbation perturbation_for(const std::string& mode, const ExperimentConfig& cfg) {
  lipdyn::Perturbation p;
  p.seed = lipdyn::stream_seed(cfg.seed, lipdyn::SeedStream::kPerturb);
  if (mode == "visual" || mode == "both") p.visual_sigma = cfg.robust.visual_sigma;
  if (mode == "landmark" || mode == "both") p.landmark_sigma = cfg.robust.landmark_sigma;
  if (mode != "none" && mode != "visual" && mode != "landmark" && mode != "both") {
    throw lipdyn::UsageError("unknown --perturb '" + mode + "' (expected none, visual, landmark or both)");
  }
  return p;
}

int eval_cmd(const EvalArgs& a) {
  const lipdyn::Checkpoint ck = load_checkpoint(a.checkpoint);
  ExperimentConfig cfg = resolve(a.common, checkpoint_config(ck));
  const lipdyn::Dataset ds = obtain_dataset(a.data, cfg);
  const auto model = lipdyn::restore_model(ck, cfg);
  const lipdyn::Perturbation p = perturbation_for(a.perturb, cfg);
  begin_output(a.common, cfg);
  const auto res = lipdyn::evaluate(*model, split_clips(ds, a.split), cfg.train.batch_size, p);
  json report = lipdyn::eval_report(res, cfg);
  report["split"] = a.split;
  report["perturb"] = a.perturb;
  write_json(fs::path(a.common.out) / "report.json", report);
  log(a.split + " acc " + fixed(res.acc) + ", macc " + fixed(res.macc));
  return kOk;
}

// ablate

struct AblateArgs {
  Common common;
  std::string data;
  std::vector<std::string> only;
};

int ablate_cmd(const AblateArgs& a) {
  ExperimentConfig cfg = resolve(a.common);
  const lipdyn::Dataset ds = obtain_dataset(a.data, cfg);
  begin_output(a.common, cfg);
  const auto rows = lipdyn::run_ablation(cfg, ds, a.only);
  for (const auto& r : rows) {
    log(r.variant + ": params " + std::to_string(r.param_count) +
        (r.trained ? ", acc " + fixed(r.acc) + ", macc " + fixed(r.macc) : std::string(", not trained")));
  }
  write_json(fs::path(a.common.out) / "ablation.json", lipdyn::ablation_json(rows, cfg));
  return kOk;
}

// robust

struct RobustArgs {
  Common common;
  std::string data;
  std::string checkpoint;
  std::string split = "test";
};

int robust_cmd(const RobustArgs& a) {
  const lipdyn::Checkpoint ck = load_checkpoint(a.checkpoint);
  ExperimentConfig cfg = resolve(a.common, checkpoint_config(ck));
  const lipdyn::Dataset ds = obtain_dataset(a.data, cfg);
  const auto model = lipdyn::restore_model(ck, cfg);
  begin_output(a.common, cfg);
  const auto rows = lipdyn::robustness_sweep(*model, split_clips(ds, a.split), cfg);
  for (const auto& r : rows) {
    log(r.condition + ": acc " + fixed(r.acc) + ", degradation " + fixed(r.degradation));
  }
  json j = lipdyn::robust_json(rows, cfg);
  j["split"] = a.split;
  write_json(fs::path(a.common.out) / "robust.json", j);
  return kOk;
}

// gradcheck

struct GradArgs {
  Common common;
  std::size_t seeds = 20;
  double tolerance = 1e-4;
};

int gradcheck_cmd(const GradArgs& a) {
  const ExperimentConfig cfg = resolve(a.common);
  begin_output(a.common, cfg);
  std::size_t failed = 0;
  const auto cases = lipdyn::run_gradcheck_suite(a.seeds, cfg.seed, a.tolerance, [&](const lipdyn::GradcheckCase& c) {
    if (!c.passed) {
      ++failed;
      log("FAIL " + c.name + " seed " + std::to_string(c.seed) + " rel error " + std::to_string(c.max_rel_error));
    }
  });
  std::map<std::string, double> worst;
  for (const auto& c : cases) worst[c.name] = std::max(worst[c.name], c.max_rel_error);
  json rows = json::array();
  for (const auto& c : cases) {
    rows.push_back({{"name", c.name}, {"seed", c.seed}, {"max_rel_error", c.max_rel_error},
                    {"entries", c.entries}, {"passed", c.passed}});
  }
  json report = {{"tolerance", a.tolerance}, {"seeds", a.seeds}, {"checks", cases.size()},
                 {"failed", failed},         {"worst", worst},   {"cases", rows}};
  write_json(fs::path(a.common.out) / "gradcheck.json", report);
  log(std::to_string(cases.size() - failed) + "/" + std::to_string(cases.size()) + " checks passed");
  return failed == 0 ? kOk : kNumeric;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const lipdyn::ConfigError*>(&e) || dynamic_cast<const lipdyn::UsageError*>(&e)) return kConfig;
  if (dynamic_cast<const lipdyn::DataError*>(&e) || dynamic_cast<const lipdyn::ConstructionError*>(&e)) return kData;
  if (dynamic_cast<const lipdyn::NumericError*>(&e)) return kNumeric;
  if (dynamic_cast<const lipdyn::LoadError*>(&e)) return kLoad;
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  lipdyn::configure_allocator();
  CLI::App app{"Landmark-guided lipreading on synthetic data"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  add_common(gen_cmd, gen.common);

  GraphArgs graphs;
  auto* graphs_cmd = app.add_subcommand("build-graphs", "Dump the three lip graphs of one clip");
  add_common(graphs_cmd, graphs.common);
  graphs_cmd->add_option("--landmarks", graphs.landmarks, "Landmark file (JSON lines)");
  graphs_cmd->add_option("--clip", graphs.clip, "Clip id (default: first record)");
  graphs_cmd->add_option("--frames", graphs.frames, "Frame tensor file (default: frames/<clip_id>.bin)");
  graphs_cmd->add_option("--checkpoint", graphs.checkpoint, "Checkpoint providing the feature extractor");

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train a model and evaluate it on the test split");
  add_common(train_sub, tr.common);
  train_sub->add_option("--data", tr.data, "Dataset directory (default: generate from config)");

  EvalArgs ev;
  auto* eval_sub = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval_sub, ev.common);
  eval_sub->add_option("--data", ev.data, "Dataset directory (default: generate from config)");
  eval_sub->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_sub->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  eval_sub->add_option("--perturb", ev.perturb, "none, visual, landmark or both")->capture_default_str();

  AblateArgs ab;
  auto* ablate_sub = app.add_subcommand("ablate", "Train and compare the four graph variants");
  add_common(ablate_sub, ab.common);
  ablate_sub->add_option("--data", ab.data, "Dataset directory (default: generate from config)");
  ablate_sub->add_option("--only", ab.only, "Train only these variants; the rest report parameter counts");

  RobustArgs rb;
  auto* robust_sub = app.add_subcommand("robust", "Evaluate a checkpoint under the four noise conditions");
  add_common(robust_sub, rb.common);
  robust_sub->add_option("--data", rb.data, "Dataset directory (default: generate from config)");
  robust_sub->add_option("--checkpoint", rb.checkpoint, "Checkpoint file")->required();
  robust_sub->add_option("--split", rb.split, "train, val or test")->capture_default_str();

  GradArgs gc;
  auto* grad_sub = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  add_common(grad_sub, gc.common);
  grad_sub->add_option("--seeds", gc.seeds, "Number of seeds")->capture_default_str();
  grad_sub->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (gen_cmd->parsed()) return gen_data(gen);
    if (graphs_cmd->parsed()) return build_graphs(graphs);
    if (train_sub->parsed()) return train_cmd(tr);
    if (eval_sub->parsed()) return eval_cmd(ev);
    if (ablate_sub->parsed()) return ablate_cmd(ab);
    if (robust_sub->parsed()) return robust_cmd(rb);
    if (grad_sub->parsed()) return gradcheck_cmd(gc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kFailure;
}
