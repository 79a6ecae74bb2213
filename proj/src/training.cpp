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

#include "lipdyn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "lipdyn/errors.hpp"

namespace lipdyn {

using nlohmann::json;

namespace {

void check_compatible(const ExperimentConfig& cfg, const Dataset& ds) {
  if (cfg.model.backend.classes != ds.config.classes) {
    throw ConfigError("model has " + std::to_string(cfg.model.backend.classes) + " classes, dataset has " +
                      std::to_string(ds.config.classes));
  }
  if (cfg.model.frontend.frame_px != ds.config.frame_px) {
    throw ConfigError("model expects " + std::to_string(cfg.model.frontend.frame_px) + " px frames, dataset has " +
                      std::to_string(ds.config.frame_px));
  }
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

[[noreturn]] void report_non_finite(const ForwardResult& fwd, const Tensor& loss, std::size_t epoch,
                                    std::size_t step) {
  std::string where = "epoch " + std::to_string(epoch) + " step " + std::to_string(step);
  for (const auto& [name, t] : fwd.trace) {
    if (!all_finite(t.data())) throw NumericError("non-finite values in '" + name + "' at " + where);
  }
  if (!all_finite(fwd.logits.data())) throw NumericError("non-finite values in 'logits' at " + where);
  (void)loss;
  throw NumericError("non-finite values in 'loss' at " + where);
}

void check_params_finite(const ModelParams& params, std::size_t epoch, std::size_t step) {
  for (const auto& [name, t] : params.entries()) {
    if (!all_finite(t.data())) {
      throw NumericError("non-finite values in parameter '" + name + "' after epoch " + std::to_string(epoch) +
                         " step " + std::to_string(step));
    }
  }
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const auto pred = argmax_rows(logits);
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) n += pred[i] == labels[i] ? 1 : 0;
  return n;
}

void shuffle_indices(std::vector<std::size_t>& idx, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

SyntheticClip apply_perturbation(const SyntheticClip& clip, const Perturbation& p, std::size_t index) {
  const std::uint64_t base = derive_seed(p.seed, index);
  SyntheticClip out = perturb_visual(clip, p.visual_sigma, derive_seed(base, 1));
  return perturb_landmarks(out, p.landmark_sigma, derive_seed(base, 2));
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream) {
  return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

std::vector<SyntheticClip> training_clips(const ExperimentConfig& cfg, const Dataset& ds) {
  if (cfg.train.resource == "high") return ds.train;
  return low_resource_subset(ds.train, cfg.train.low_fraction, stream_seed(cfg.seed, SeedStream::kSubset));
}

TrainResult train(const ExperimentConfig& cfg, const Dataset& ds, const EpochCallback& on_epoch) {
  cfg.validate();
  check_compatible(cfg, ds);
  TrainResult result;
  result.model = std::make_unique<LipModel>(cfg.model, stream_seed(cfg.seed, SeedStream::kInit));
  LipModel& model = *result.model;
  AdamW opt(model.params(), cfg.train.optim);

  const std::vector<SyntheticClip> clips = training_clips(cfg, ds);
  if (clips.empty()) throw DataError("no training clips");
  result.train_clips = clips.size();
  const MaskConfig mask{cfg.train.mask_max_len};
  const std::size_t bs = cfg.train.batch_size;
  const std::uint64_t shuffle_base = stream_seed(cfg.seed, SeedStream::kShuffle);
  const std::uint64_t augment_base = stream_seed(cfg.seed, SeedStream::kAugment);

  std::vector<std::size_t> order(clips.size());
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_indices(order, derive_seed(shuffle_base, epoch));
    const std::uint64_t epoch_aug = derive_seed(augment_base, epoch);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += bs) {
      const std::size_t b1 = std::min(order.size(), b0 + bs);
      std::vector<SyntheticClip> batch_clips;
      batch_clips.reserve(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) {
        batch_clips.push_back(augment(clips[order[i]], cfg.train.flip_p, mask, derive_seed(epoch_aug, i)));
      }
      const ClipBatch batch = make_batch(batch_clips, 0, batch_clips.size());
      ++step;
      opt.zero_grad();
      ForwardResult fwd;
      Tensor loss = model.loss(batch, &fwd);
      if (!std::isfinite(loss.item())) report_non_finite(fwd, loss, epoch, step);
      backward(loss);
      opt.step();
      check_params_finite(model.params(), epoch, step);
      loss_sum += loss.item() * static_cast<double>(batch.size());
      correct += count_correct(fwd.logits, batch.labels);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(clips.size());
    m.train_acc = static_cast<double>(correct) / static_cast<double>(clips.size());
    if (cfg.train.val_every > 0 && !ds.val.empty() &&
        (epoch % cfg.train.val_every == 0 || epoch == cfg.train.epochs)) {
      const EvalResult val = evaluate(model, ds.val, bs);
      m.has_val = true;
      m.val_loss = val.loss;
      m.val_acc = val.acc;
    }
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  model.params().zero_grad();
  result.optim = opt.state();
  result.final_train_acc = evaluate(model, clips, bs).acc;
  return result;
}

EvalResult evaluate(const LipModel& model, const std::vector<SyntheticClip>& clips, std::size_t batch_size,
                    const Perturbation& perturbation) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (perturbation.visual_sigma < 0.0 || perturbation.landmark_sigma < 0.0) {
    throw ConfigError("perturbation sigmas must be non-negative");
  }
  NoGradGuard no_grad;
  EvalResult out;
  double loss_sum = 0.0;
  const bool perturbed = perturbation.visual_sigma > 0.0 || perturbation.landmark_sigma > 0.0;
  for (std::size_t b0 = 0; b0 < clips.size(); b0 += batch_size) {
    const std::size_t b1 = std::min(clips.size(), b0 + batch_size);
    ClipBatch batch;
    if (perturbed) {
      std::vector<SyntheticClip> noisy;
      noisy.reserve(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) noisy.push_back(apply_perturbation(clips[i], perturbation, i));
      batch = make_batch(noisy, 0, noisy.size());
    } else {
      batch = make_batch(clips, b0, b1);
    }
    ForwardResult fwd;
    const Tensor loss = model.loss(batch, &fwd);
    loss_sum += loss.item() * static_cast<double>(batch.size());
    const auto pred = argmax_rows(fwd.logits);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out.records.push_back({batch.clip_ids[i], batch.speaker_ids[i], batch.labels[i], pred[i]});
    }
  }
  if (!clips.empty()) {
    out.loss = loss_sum / static_cast<double>(clips.size());
    out.acc = accuracy(out.records);
    out.macc = mean_accuracy(out.records);
  }
  return out;
}

json eval_report(const EvalResult& result, const ExperimentConfig& cfg) {
  json per = json::object();
  for (const auto& [id, s] : per_speaker_stats(result.records)) {
    per[id] = {{"n", s.n}, {"correct", s.correct}, {"acc", s.acc}};
  }
  return {{"acc", result.acc},
          {"macc", result.macc},
          {"n", result.records.size()},
          {"loss", result.loss},
          {"per_speaker", per},
          {"config_hash", hash_hex(config_hash(cfg))},
          {"seed", cfg.seed}};
}

json history_json(const std::vector<EpochMetrics>& history) {
  json rows = json::array();
  for (const auto& m : history) {
    json row = {{"epoch", m.epoch}, {"train_loss", m.train_loss}, {"train_acc", m.train_acc}};
    if (m.has_val) {
      row["val_loss"] = m.val_loss;
      row["val_acc"] = m.val_acc;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Checkpoint make_checkpoint(const LipModel& model, const OptimState* optim, const ExperimentConfig& cfg) {
  Checkpoint ck;
  ck.arch_hash = architecture_hash(cfg);
  ck.seed = cfg.seed;
  ck.config_json = to_json(cfg).dump();
  for (const auto& [name, t] : model.params().entries()) ck.params.emplace_back(name, t.clone());
  if (optim != nullptr) {
    ck.optim = *optim;
    ck.has_optim = true;
  }
  return ck;
}

std::unique_ptr<LipModel> restore_model(const Checkpoint& ck, const ExperimentConfig& cfg) {
  auto model = std::make_unique<LipModel>(cfg.model, stream_seed(cfg.seed, SeedStream::kInit));
  load_params(model->params(), ck);
  if (ck.arch_hash != architecture_hash(cfg)) {
    throw LoadError("checkpoint architecture hash " + hash_hex(ck.arch_hash) + " does not match the config (" +
                    hash_hex(architecture_hash(cfg)) + ")");
  }
  return model;
}

std::vector<AblationVariant> ablation_variants() {
  return {{"baseline", false, false, false},
          {"+DAG", true, false, false},
          {"+DAG+LCG", true, true, false},
          {"+DAG+LCG+SAG", true, true, true}};
}

ExperimentConfig variant_config(const ExperimentConfig& base, const AblationVariant& v) {
  ExperimentConfig cfg = base;
  cfg.model.use_dag = v.use_dag;
  cfg.model.use_lcg = v.use_lcg;
  cfg.model.use_sag = v.use_sag;
  cfg.model.fusion_mode = "auto";
  return cfg;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const Dataset& ds,
                                      const std::vector<std::string>& train_only) {
  std::vector<AblationRow> rows;
  for (const auto& v : ablation_variants()) {
    const ExperimentConfig cfg = variant_config(base, v);
    AblationRow row;
    row.variant = v.name;
    const bool wanted =
        train_only.empty() || std::find(train_only.begin(), train_only.end(), v.name) != train_only.end();
    if (wanted) {
      TrainResult tr = train(cfg, ds);
      const EvalResult test = evaluate(*tr.model, ds.test, cfg.train.batch_size);
      row.acc = test.acc;
      row.macc = test.macc;
      row.train_acc = tr.final_train_acc;
      row.param_count = tr.model->param_count();
      row.graph_param_count = tr.model->graph_param_count();
      row.trained = true;
    } else {
      const LipModel model(cfg.model, stream_seed(cfg.seed, SeedStream::kInit));
      row.param_count = model.param_count();
      row.graph_param_count = model.graph_param_count();
    }
    rows.push_back(row);
  }
  return rows;
}

json ablation_json(const std::vector<AblationRow>& rows, const ExperimentConfig& base) {
  json out = json::array();
  for (const auto& r : rows) {
    json row = {{"variant", r.variant},
                {"param_count", r.param_count},
                {"graph_param_count", r.graph_param_count},
                {"trained", r.trained}};
    if (r.trained) {
      row["acc"] = r.acc;
      row["macc"] = r.macc;
      row["train_acc"] = r.train_acc;
    }
    out.push_back(std::move(row));
  }
  return {{"rows", out}, {"config_hash", hash_hex(config_hash(base))}, {"seed", base.seed}};
}

std::vector<RobustRow> robustness_sweep(const LipModel& model, const std::vector<SyntheticClip>& clips,
                                        const ExperimentConfig& cfg) {
  const double sv = cfg.robust.visual_sigma;
  const double sl = cfg.robust.landmark_sigma;
  const std::uint64_t seed = stream_seed(cfg.seed, SeedStream::kPerturb);
  std::vector<RobustRow> rows = {{"clean", 0.0, 0.0},
                                 {"+visual_noise", sv, 0.0},
                                 {"+landmark_perturbation", 0.0, sl},
                                 {"+noise+perturbation", sv, sl}};
  for (auto& r : rows) {
    const EvalResult res = evaluate(model, clips, cfg.train.batch_size, {r.visual_sigma, r.landmark_sigma, seed});
    r.acc = res.acc;
    r.macc = res.macc;
    r.degradation = rows.front().acc - r.acc;
  }
  return rows;
}

json robust_json(const std::vector<RobustRow>& rows, const ExperimentConfig& cfg) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"condition", r.condition},
                   {"visual_sigma", r.visual_sigma},
                   {"landmark_sigma", r.landmark_sigma},
                   {"acc", r.acc},
                   {"macc", r.macc},
                   {"degradation", r.degradation}});
  }
  return {{"rows", out}, {"config_hash", hash_hex(config_hash(cfg))}, {"seed", cfg.seed}};
}

void configure_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace lipdyn
