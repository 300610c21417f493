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

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uqseg {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised for incompatible shapes or arguments passed to tensor operations.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value that must be finite is not, or when the graph is misused.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct TensorImpl;

struct GraphNode {
  /// Receives the op's output (data and accumulated grad) and its parents.
  using BackwardFn = std::function<void(const TensorImpl& out, std::vector<std::shared_ptr<TensorImpl>>& parents)>;

  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<GraphNode> node;  // null for leaves

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major float64 array that can take part in a reverse-mode
/// differentiation graph.
///
/// Tensor is a handle: copies share storage and graph identity, which is what
/// lets a parameter leaf accumulate gradients from every use. clone() makes a
/// deep, detached copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor of(Shape shape, std::initializer_list<double> values) {
    return Tensor(std::move(shape), std::vector<double>(values));
  }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Direct write access. Only meaningful on leaves (parameters, buffers,
  /// freshly built inputs); writing into an interior node corrupts backward.
  std::span<double> mutable_data();
  const std::vector<double>& values() const;
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Reverse-mode sweep from a single-element tensor. Populates grad() on every
  /// requires_grad leaf reachable from here and releases the graph; a second
  /// call on the same graph throws.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }
  static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// True while graph recording is enabled on this thread.
bool grad_enabled();

/// Disables graph recording for its lifetime (inference, metric code).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Builds the output of an op. A graph node is attached only when recording
/// is on and at least one parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> data, const char* op, std::vector<Tensor> parents,
                   GraphNode::BackwardFn backward);

/// Gradient buffer of parent `i`, or null when it does not take part in the graph.
inline std::vector<double>* grad_of(std::vector<std::shared_ptr<TensorImpl>>& parents, std::size_t i) {
  auto& p = parents[i];
  return p && p->requires_grad ? &p->ensure_grad() : nullptr;
}

}  // namespace detail

/// Visits every distinct tensor in the graph below `root` (including root).
void visit_graph(const Tensor& root, const std::function<void(const detail::TensorImpl&)>& fn);

}  // namespace uqseg
