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

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lipdyn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

/// Dense row-major double tensor with optional gradient buffer.
///
/// A Tensor is a cheap handle; copies alias the same storage. Operations in
/// ops.hpp produce new tensors and, when any input requires a gradient, record
/// themselves so that backward() can replay their adjoints.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  /// Extent of dimension `axis`; negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Mutable view of the values. Only valid on leaves (parameters, inputs);
  /// writing into a taped intermediate invalidates its recorded adjoint.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Allocates a zero buffer if none is present.
  std::span<double> mutable_grad();
  void zero_grad();

  /// Deep copy of values, no gradient, not taped.
  Tensor clone() const;
  /// Same values, cut from the tape.
  Tensor detach() const { return clone(); }

  /// Name of the recorded op that produced this tensor, or "leaf".
  std::string_view op_name() const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

using AdjointFn = std::function<void(const TensorImpl& out)>;

struct OpNode {
  std::string name;
  std::vector<Tensor> inputs;
  AdjointFn adjoint;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when absent
  bool requires_grad = false;
  std::shared_ptr<OpNode> producer;
};

/// True when new ops should be recorded (see NoGradGuard).
bool grad_enabled();

/// True when recording is enabled and any input requires a gradient.
bool needs_grad(std::initializer_list<const Tensor*> inputs);
bool needs_grad(std::span<const Tensor> inputs);

/// Attach `adjoint` to `out` as its producing op.
void record(Tensor& out, std::string name, std::vector<Tensor> inputs, AdjointFn adjoint);

/// Gradient buffer of `t`, allocated on first use. Adjoints accumulate into it.
std::span<double> grad_of(const Tensor& t);

}  // namespace detail

/// Disables op recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Ordered record of the ops reachable from a scalar loss.
///
/// Entries are in execution (topological) order; backward() replays their
/// adjoints from the last entry to the first.
class GradTape {
 public:
  static GradTape from_loss(const Tensor& loss);

  std::size_t size() const { return ops_.size(); }
  std::vector<std::string> op_names() const;

  /// Seeds d(loss)/d(loss) = 1 and replays every adjoint once. Gradients of
  /// leaves accumulate across calls; intermediate gradients are reset first.
  void backward();

 private:
  Tensor loss_;
  std::vector<Tensor> ops_;  // tensors that carry a producer, topological order
};

/// Reverse-mode pass from a scalar loss. Leaf gradients accumulate: calling
/// backward twice without zero_grad() doubles them.
void backward(const Tensor& loss);

}  // namespace lipdyn
