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

#include "lipdyn/backend.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "lipdyn/errors.hpp"

namespace lipdyn {

void BackendConfig::validate() const {
  if (dilations.empty()) throw ConfigError("backend needs at least one TCN block");
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    if (dilations[i] == 0) throw ConfigError("dilations must be positive");
    if (i > 0 && dilations[i] <= dilations[i - 1]) {
      throw ConfigError("dilations must be strictly increasing");
    }
  }
  if (kernel_width % 2 == 0) throw ConfigError("TCN kernel width must be odd");
  if (classes < 2) throw ConfigError("need at least two classes");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("label smoothing must lie in [0,1)");
}

std::size_t BackendConfig::receptive_field() const {
  std::size_t s = 0;
  for (auto d : dilations) s += d;
  return 1 + (kernel_width - 1) * s;
}

BackendParams make_backend(const BackendConfig& cfg, std::size_t dim, ModelParams& params, Rng& rng) {
  cfg.validate();
  BackendParams p;
  p.block_activation = cfg.block_activation;
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim * cfg.kernel_width));
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
    const std::string prefix = "backend.tcn" + std::to_string(i);
    TcnBlock b;
    b.kernel = params.add_uniform(prefix + ".kernel", {dim, dim, cfg.kernel_width}, bound, rng);
    b.bias = params.add_uniform(prefix + ".bias", {dim}, bound, rng);
    b.dilation = cfg.dilations[i];
    p.blocks.push_back(std::move(b));
  }
  p.head1 = make_linear(params, "head.fc1", dim, cfg.head_hidden, rng, kReluGain);
  p.head2 = make_linear(params, "head.fc2", cfg.head_hidden, cfg.classes, rng);
  return p;
}

Tensor aggregate(const Tensor& seq, const BackendParams& p) {
  if (seq.rank() != 3 || seq.dim(1) == 0) {
    throw DimensionError("aggregate expects [B,T,D] with T >= 1, got " + shape_str(seq.shape()));
  }
  const std::size_t t_len = seq.dim(1);
  Tensor x = seq;
  for (const auto& b : p.blocks) {
    if (b.dilation >= t_len) {
      static thread_local bool warned = false;
      if (!warned) {
        std::cerr << "warning: TCN dilation " << b.dilation << " >= sequence length " << t_len
                  << "; taps beyond the sequence read zero padding\n";
        warned = true;
      }
    }
    x = add(x, pointwise(conv1d_channels_last(x, b.kernel, b.dilation, b.bias), p.block_activation));
  }
  return x;
}

Tensor pool_and_classify(const Tensor& seq, const BackendParams& p) {
  if (seq.rank() != 3) throw DimensionError("classifier expects [B,T,D], got " + shape_str(seq.shape()));
  return linear(relu(linear(mean(seq, 1), p.head1)), p.head2);
}

Tensor label_smoothed_ce(const Tensor& logits, std::span<const int> labels, double smoothing) {
  if (logits.rank() != 2) throw DimensionError("logits must be [B,C], got " + shape_str(logits.shape()));
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  if (classes < 2) throw ConfigError("label smoothing needs at least two classes");
  if (labels.size() != batch) {
    throw DimensionError("got " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch));
  }
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("label smoothing must lie in [0,1)");
  if (batch == 0) throw UsageError("loss over an empty batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError("label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
    }
  }
  const double off = smoothing / static_cast<double>(classes - 1);
  const auto z = logits.data();
  // probs[b,i] and the smoothed target q[b,i]; loss = -sum q log p.
  auto probs = std::make_shared<std::vector<double>>(batch * classes);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = z.data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t i = 0; i < classes; ++i) s += std::exp(row[i] - mx);
    const double lse = mx + std::log(s);
    double loss_b = 0.0;
    for (std::size_t i = 0; i < classes; ++i) {
      const double logp = row[i] - lse;
      (*probs)[b * classes + i] = std::exp(logp);
      const double q = static_cast<int>(i) == labels[b] ? 1.0 - smoothing : off;
      loss_b -= q * logp;
    }
    total += loss_b;
  }
  Tensor loss = Tensor::scalar(total / static_cast<double>(batch));
  if (detail::needs_grad({&logits})) {
    std::vector<int> ys(labels.begin(), labels.end());
    detail::record(loss, "label_smoothed_ce", {logits},
                   [logits, probs, ys, batch, classes, smoothing, off](const detail::TensorImpl& o) {
                     auto g = detail::grad_of(logits);
                     const double scale = o.grad[0] / static_cast<double>(batch);
                     for (std::size_t b = 0; b < batch; ++b) {
                       for (std::size_t i = 0; i < classes; ++i) {
                         const double q = static_cast<int>(i) == ys[b] ? 1.0 - smoothing : off;
                         g[b * classes + i] += scale * ((*probs)[b * classes + i] - q);
                       }
                     }
                   });
  }
  return loss;
}

double accuracy(std::span<const EvalRecord> records) {
  if (records.empty()) throw UsageError("accuracy of an empty record list");
  const auto hits = std::count_if(records.begin(), records.end(),
                                  [](const EvalRecord& r) { return r.predicted == r.label; });
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::map<std::string, SpeakerStats> per_speaker_stats(std::span<const EvalRecord> records) {
  std::map<std::string, SpeakerStats> out;
  for (const auto& r : records) {
    auto& s = out[r.speaker_id];
    ++s.n;
    if (r.predicted == r.label) ++s.correct;
  }
  for (auto& [id, s] : out) s.acc = static_cast<double>(s.correct) / static_cast<double>(s.n);
  return out;
}

double mean_accuracy(std::span<const EvalRecord> records) {
  if (records.empty()) throw UsageError("mean accuracy of an empty record list");
  const auto stats = per_speaker_stats(records);
  double s = 0.0;
  for (const auto& [id, st] : stats) s += st.acc;
  return s / static_cast<double>(stats.size());
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  std::vector<int> out(rows);
  const auto d = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = d.data() + r * cols;
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

}  // namespace lipdyn
