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

#include "uqseg/model/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace uqseg::model {

OptimizerKind parse_optimizer(const std::string& tag) {
  if (tag == "adam") return OptimizerKind::adam;
  if (tag == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + tag + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : Optimizer(std::move(params), lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const auto g = params_[i].grad();
    auto w = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

Sgd::Sgd(std::vector<Tensor> params, double lr, double momentum) : Optimizer(std::move(params), lr), momentum_(momentum) {
  for (const auto& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void Sgd::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const auto g = params_[i].grad();
    auto w = params_[i].mutable_data();
    auto& vel = velocity_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      vel[k] = momentum_ * vel[k] + g[k];
      w[k] -= lr_ * vel[k];
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, std::vector<Tensor> params, double lr, double momentum) {
  if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive");
  if (kind == OptimizerKind::adam) return std::make_unique<Adam>(std::move(params), lr);
  return std::make_unique<Sgd>(std::move(params), lr, momentum);
}

}  // namespace uqseg::model
