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

#include <map>
#include <span>
#include <string>
#include <vector>

#include "lipdyn/ops.hpp"
#include "lipdyn/params.hpp"

namespace lipdyn {

/// Residual dilated TCN (stand-in for a densely connected TCN), mean pooling
/// over time and a two-layer MLP head.
struct BackendConfig {
  std::vector<std::size_t> dilations{1, 2, 4};
  std::size_t kernel_width = 3;
  std::size_t classes = 10;
  std::size_t head_hidden = 64;
  double smoothing = 0.1;
  UnaryOp block_activation = UnaryOp::kRelu;

  /// Dilations strictly increasing, odd kernel, >= 2 classes, 0 <= eps < 1.
  void validate() const;
  /// Frames seen by one output frame: 1 + (k - 1) * sum(dilations).
  std::size_t receptive_field() const;
};

struct TcnBlock {
  Tensor kernel;  // [D,D,k]
  Tensor bias;    // [D]
  std::size_t dilation = 1;
};

struct BackendParams {
  std::vector<TcnBlock> blocks;
  Linear head1;
  Linear head2;
  UnaryOp block_activation = UnaryOp::kRelu;
};

BackendParams make_backend(const BackendConfig& cfg, std::size_t dim, ModelParams& params, Rng& rng);

/// x + act(conv_d(x) + b) for each block; [B,T,D] -> [B,T,D].
Tensor aggregate(const Tensor& seq, const BackendParams& p);

/// Mean over time, then Linear-ReLU-Linear: [B,T,D] -> logits [B,C].
Tensor pool_and_classify(const Tensor& seq, const BackendParams& p);

/// Batch mean of -[(1-eps) log p_y + eps/(C-1) sum_{i != y} log p_i] with
/// p = softmax(logits). Throws DataError on a label outside [0, C).
Tensor label_smoothed_ce(const Tensor& logits, std::span<const int> labels, double smoothing);

struct EvalRecord {
  std::string clip_id;
  std::string speaker_id;
  int label = 0;
  int predicted = 0;
};

struct SpeakerStats {
  std::size_t n = 0;
  std::size_t correct = 0;
  double acc = 0.0;
};

/// Fraction of records with predicted == label.
double accuracy(std::span<const EvalRecord> records);
/// Unweighted mean over speakers of per-speaker accuracy.
double mean_accuracy(std::span<const EvalRecord> records);
std::map<std::string, SpeakerStats> per_speaker_stats(std::span<const EvalRecord> records);

/// Index of the largest logit per row of [B,C].
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace lipdyn
