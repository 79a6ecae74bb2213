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

#include "lipdyn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "lipdyn/errors.hpp"

namespace lipdyn {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw UsageError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }
bool Tensor::is_leaf() const { return impl_->producer == nullptr; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() { return detail::grad_of(*this); }

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, false); }

std::string_view Tensor::op_name() const {
  return impl_->producer ? std::string_view(impl_->producer->name) : std::string_view("leaf");
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

bool needs_grad(std::span<const Tensor> inputs) {
  if (!g_grad_enabled) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

void record(Tensor& out, std::string name, std::vector<Tensor> inputs, AdjointFn adjoint) {
  auto node = std::make_shared<OpNode>();
  node->name = std::move(name);
  node->inputs = std::move(inputs);
  node->adjoint = std::move(adjoint);
  out.impl()->producer = std::move(node);
  out.impl()->requires_grad = true;
}

std::span<double> grad_of(const Tensor& t) {
  auto* impl = t.impl();
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
  return impl->grad;
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = previous_; }

GradTape GradTape::from_loss(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  GradTape tape;
  tape.loss_ = loss;
  // Iterative post-order DFS; post-order over producers is a topological order.
  std::unordered_set<const detail::TensorImpl*> visited;
  struct Frame {
    Tensor t;
    std::size_t next;
  };
  std::vector<Frame> stack;
  if (loss.impl()->producer) {
    stack.push_back({loss, 0});
    visited.insert(loss.impl());
  }
  while (!stack.empty()) {
    auto& top = stack.back();
    const auto& inputs = top.t.impl()->producer->inputs;
    if (top.next < inputs.size()) {
      const Tensor& in = inputs[top.next++];
      if (in.defined() && in.impl()->producer && in.requires_grad() &&
          visited.insert(in.impl()).second) {
        stack.push_back({in, 0});
      }
      continue;
    }
    tape.ops_.push_back(top.t);
    stack.pop_back();
  }
  return tape;
}

std::vector<std::string> GradTape::op_names() const {
  std::vector<std::string> names;
  names.reserve(ops_.size());
  for (const auto& t : ops_) names.emplace_back(t.op_name());
  return names;
}

void GradTape::backward() {
  // Intermediate buffers are dropped and re-created on first contribution;
  // an op whose output received no gradient is skipped.
  for (auto& t : ops_) t.impl()->grad.clear();
  if (!loss_.requires_grad()) return;
  detail::grad_of(loss_)[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const auto* impl = it->impl();
    if (impl->grad.empty()) continue;
    impl->producer->adjoint(*impl);
  }
}

void backward(const Tensor& loss) { GradTape::from_loss(loss).backward(); }

}  // namespace lipdyn
