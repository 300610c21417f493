/* Copyright 2026 The uqseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */

#include "uqseg/core/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace uqseg {
namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  impl_->data.assign(uqseg::numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<detail::TensorImpl>()) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  if (uqseg::numel(shape) != values.size())
    throw ShapeError("shape " + to_string(shape) + " needs " + std::to_string(uqseg::numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ShapeError("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t i) const {
  const auto& s = shape();
  if (i >= s.size()) throw ShapeError("dim index " + std::to_string(i) + " out of range for " + to_string(s));
  return s[i];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!impl_) throw ShapeError("use of undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw ShapeError("use of undefined tensor");
  return impl_->data;
}

const std::vector<double>& Tensor::values() const {
  if (!impl_) throw ShapeError("use of undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_) throw ShapeError("use of undefined tensor");
  if (impl_->node) throw NumericError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

bool Tensor::has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw NumericError("tensor has no gradient");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!impl_) throw ShapeError("use of undefined tensor");
  return impl_->ensure_grad();
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

void Tensor::backward() const {
  if (!impl_) throw ShapeError("backward on undefined tensor");
  if (impl_->data.size() != 1)
    throw NumericError("backward requires a scalar loss, got shape " + to_string(impl_->shape));
  if (!impl_->requires_grad) throw NumericError("backward on a tensor that is detached from every leaf");
  if (impl_->node && impl_->node->consumed)
    throw NumericError("backward called twice on the same graph; rebuild the graph first");

  // Iterative post-order DFS gives a topological order (parents before children).
  // `order` holds strong references: releasing a node's parents below must not
  // free tensors that are still waiting for their own backward step.
  std::vector<std::shared_ptr<detail::TensorImpl>> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::pair<std::shared_ptr<detail::TensorImpl>, std::size_t>> stack;
  stack.emplace_back(impl_, 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t->node && next < t->node->parents.size()) {
      std::shared_ptr<detail::TensorImpl> p = t->node->parents[next++];
      if (p && p->requires_grad && !seen.count(p.get())) {
        if (p->node && p->node->consumed)
          throw NumericError("graph reuses a subgraph that was already released by backward");
        seen.insert(p.get());
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      order.push_back(t);
      stack.pop_back();
    }
  }

  impl_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = it->get();
    if (!t->node) continue;
    auto node = t->node;
    if (t->grad.size() != t->data.size()) t->grad.assign(t->data.size(), 0.0);
    if (node->backward) node->backward(*t, node->parents);
    node->consumed = true;
    node->backward = nullptr;
    node->parents.clear();
    t->grad.clear();
    t->grad.shrink_to_fit();
  }
}

Tensor Tensor::detach() const {
  if (!impl_) return {};
  return Tensor(impl_->shape, impl_->data);
}

Tensor Tensor::clone() const { return detach(); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> data, const char* op, std::vector<Tensor> parents,
                   GraphNode::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  auto node = std::make_shared<GraphNode>();
  node->op = op;
  node->parents.reserve(parents.size());
  for (auto& p : parents) node->parents.push_back(p.impl_ptr());
  node->backward = std::move(backward);
  out.impl()->node = std::move(node);
  out.impl()->requires_grad = true;
  return out;
}

}  // namespace detail

void visit_graph(const Tensor& root, const std::function<void(const detail::TensorImpl&)>& fn) {
  if (!root.defined()) return;
  std::unordered_set<const detail::TensorImpl*> seen;
  std::vector<const detail::TensorImpl*> stack{root.impl()};
  seen.insert(root.impl());
  while (!stack.empty()) {
    const auto* t = stack.back();
    stack.pop_back();
    fn(*t);
    if (!t->node) continue;
    for (const auto& p : t->node->parents)
      if (p && !seen.count(p.get())) {
        seen.insert(p.get());
        stack.push_back(p.get());
      }
  }
}

}  // namespace uqseg
