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

#include <memory>
#include <string>
#include <vector>

#include "uqseg/core/tensor.hpp"

namespace uqseg::model {

enum class OptimizerKind { adam, sgd };

OptimizerKind parse_optimizer(const std::string& tag);
std::string to_string(OptimizerKind kind);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Applies one update from the accumulated gradients.
  virtual void step() = 0;
  void zero_grad();
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 protected:
  Optimizer(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {}
  std::vector<Tensor> params_;
  double lr_;
};

class Adam : public Optimizer {
 public:
  Adam(std::vector<Tensor> params, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step() override;

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// SGD with heavy-ball momentum: v = mu v + g; w -= lr v.
class Sgd : public Optimizer {
 public:
  Sgd(std::vector<Tensor> params, double lr, double momentum = 0.9);
  void step() override;

 private:
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, std::vector<Tensor> params, double lr,
                                          double momentum = 0.9);

}  // namespace uqseg::model
