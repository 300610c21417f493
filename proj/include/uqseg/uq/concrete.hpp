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

#include <string>
#include <utility>
#include <vector>

#include "uqseg/core/rng.hpp"
#include "uqseg/core/tensor.hpp"
#include "uqseg/model/unet.hpp"
#include "uqseg/uq/method.hpp"

namespace uqseg::uq {

/// Relaxed keep-mask value 1 - sigmoid((logit p + logit u) / t).
double concrete_relaxation(double p_logit, double u, double temperature);

/// x * z / (1 - p) with one relaxed mask value z per element, p = sigmoid(p_logit).
/// Differentiable in x and in the single-element `p_logit`.
Tensor concrete_dropout(const Tensor& x, const Tensor& p_logit, double temperature, Rng& rng);

struct ConcreteLayer {
  Tensor weight;               // regularized kernel
  Tensor p_logit;              // [1]
  std::size_t input_channels;  // K_l
};

/// Sum over layers of l^2 (1 - p) / (2N) ||W||^2 + K_l / N (p ln p + (1 - p) ln(1 - p)).
Tensor concrete_regularizer(const std::vector<ConcreteLayer>& layers, double lengthscale, std::size_t n_data);

/// Learned-rate dropout on every residual unit output. The regularized
/// weight of a site is the kernel of the unit's second convolution, whose
/// output is the dropped activation, and K_l is that kernel's input channel count.
class ConcreteDropout : public model::NetworkExtension {
 public:
  explicit ConcreteDropout(ConcreteSpec spec);

  std::string tag() const override { return "concrete_dropout"; }
  nlohmann::json config() const override;
  void attach(const model::UNet& net, model::ParameterStore& store, Rng& rng) override;
  Tensor unit_output(std::size_t site, const Tensor& h, const model::ForwardContext& ctx) override;
  Tensor extra_loss(std::size_t n_train) override;

  /// Current dropout probability per site, by site name.
  std::vector<std::pair<std::string, double>> dropout_probabilities() const;

 private:
  ConcreteSpec spec_;
  std::vector<std::string> names_;
  std::vector<ConcreteLayer> layers_;
};

}  // namespace uqseg::uq
