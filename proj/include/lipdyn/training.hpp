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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lipdyn/backend.hpp"
#include "lipdyn/config.hpp"
#include "lipdyn/io.hpp"
#include "lipdyn/model.hpp"
#include "lipdyn/optim.hpp"
#include "lipdyn/synth.hpp"

namespace lipdyn {

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  /// Accuracy on the augmented batches seen during the epoch.
  double train_acc = 0.0;
  bool has_val = false;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct TrainResult {
  std::unique_ptr<LipModel> model;
  OptimState optim;
  std::vector<EpochMetrics> history;
  /// Clean (unaugmented) accuracy on the clips the model was trained on.
  double final_train_acc = 0.0;
  std::size_t train_clips = 0;
};

/// Seed of the named random stream of a run.
enum class SeedStream : std::uint64_t { kInit = 1, kSubset = 2, kShuffle = 3, kAugment = 4, kPerturb = 5 };
std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream);

/// Training clips of a run: the whole training split, or the per-speaker
/// low-resource subset.
std::vector<SyntheticClip> training_clips(const ExperimentConfig& cfg, const Dataset& ds);

/// Minibatch AdamW training for cfg.train.epochs epochs. Deterministic in
/// (cfg, ds). Throws NumericError naming the first non-finite activation.
TrainResult train(const ExperimentConfig& cfg, const Dataset& ds, const EpochCallback& on_epoch = {});

/// Optional test-time corruption. Zero sigmas leave clips untouched.
struct Perturbation {
  double visual_sigma = 0.0;
  double landmark_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct EvalResult {
  std::vector<EvalRecord> records;
  double loss = 0.0;
  double acc = 0.0;
  double macc = 0.0;
};

/// Forward-only pass over clips in fixed order.
EvalResult evaluate(const LipModel& model, const std::vector<SyntheticClip>& clips, std::size_t batch_size,
                    const Perturbation& perturbation = {});

/// {acc, macc, n, per_speaker: {id: {n, correct, acc}}, config_hash, seed}.
nlohmann::json eval_report(const EvalResult& result, const ExperimentConfig& cfg);
nlohmann::json history_json(const std::vector<EpochMetrics>& history);

Checkpoint make_checkpoint(const LipModel& model, const OptimState* optim, const ExperimentConfig& cfg);
/// Rebuilds the model of a checkpoint. Throws LoadError when the checkpoint
/// was written for a different architecture.
std::unique_ptr<LipModel> restore_model(const Checkpoint& ck, const ExperimentConfig& cfg);

struct AblationVariant {
  std::string name;
  bool use_dag = false;
  bool use_lcg = false;
  bool use_sag = false;
};

/// baseline, +DAG, +DAG+LCG, +DAG+LCG+SAG.
std::vector<AblationVariant> ablation_variants();
ExperimentConfig variant_config(const ExperimentConfig& base, const AblationVariant& v);

struct AblationRow {
  std::string variant;
  double acc = 0.0;
  double macc = 0.0;
  double train_acc = 0.0;
  std::size_t param_count = 0;
  std::size_t graph_param_count = 0;
  bool trained = false;
};

/// Trains every variant whose name is in `train_only` (all when empty) on
/// the same data and seed and evaluates it on the test split. Untrained
/// variants still report their parameter counts.
std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const Dataset& ds,
                                      const std::vector<std::string>& train_only = {});
nlohmann::json ablation_json(const std::vector<AblationRow>& rows, const ExperimentConfig& base);

struct RobustRow {
  std::string condition;
  double visual_sigma = 0.0;
  double landmark_sigma = 0.0;
  double acc = 0.0;
  double macc = 0.0;
  /// Clean accuracy minus this row's accuracy.
  double degradation = 0.0;
};

/// clean, +visual_noise, +landmark_perturbation, +noise+perturbation.
std::vector<RobustRow> robustness_sweep(const LipModel& model, const std::vector<SyntheticClip>& clips,
                                        const ExperimentConfig& cfg);
nlohmann::json robust_json(const std::vector<RobustRow>& rows, const ExperimentConfig& cfg);

/// Keeps large tensor buffers on the heap instead of fresh mappings, which
/// the training loop allocates and frees at a high rate. No-op off glibc.
void configure_allocator();

}  // namespace lipdyn
