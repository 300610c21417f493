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

#include "uqseg/uq/concrete.hpp"

#include <cmath>
#include <stdexcept>

#include "uqseg/core/ops.hpp"

namespace uqseg::uq {
namespace {

double sigmoid(double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

}  // namespace

double concrete_relaxation(double p_logit, double u, double temperature) {
  return 1.0 - sigmoid((p_logit + std::log(u) - std::log1p(-u)) / temperature);
}

Tensor concrete_dropout(const Tensor& x, const Tensor& p_logit, double temperature, Rng& rng) {
  if (p_logit.numel() != 1) throw ShapeError("concrete_dropout: p_logit must hold one value");
  if (!(temperature > 0)) throw std::invalid_argument("concrete_dropout: temperature must be positive");
  const double logit = p_logit.item();
  const double p = sigmoid(logit);
  const double scale = 1.0 + std::exp(logit);  // 1 / (1 - p)
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  std::vector<double> drop(xd.size());  // sigmoid of the relaxed logit, 1 - z
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double u = rng.uniform();
    drop[i] = sigmoid((logit + std::log(u) - std::log1p(-u)) / temperature);
    out[i] = xd[i] * (1.0 - drop[i]) * scale;
  }
  return detail::make_result(
      x.shape(), std::move(out), "concrete_dropout", {x, p_logit},
      [drop = std::move(drop), p, scale, temperature](const detail::TensorImpl& o, std::vector<std::shared_ptr<detail::TensorImpl>>& par) {
        auto* gx = detail::grad_of(par, 0);
        auto* gl = detail::grad_of(par, 1);
        const auto& xv = par[0]->data;
        double acc = 0.0;
        for (std::size_t i = 0; i < drop.size(); ++i) {
          const double z = 1.0 - drop[i];
          if (gx) (*gx)[i] += o.grad[i] * z * scale;
          // d(z / (1 - p)) / d logit = -s (1 - s) / t / (1 - p) + z p / (1 - p)
          if (gl) acc += o.grad[i] * xv[i] * scale * (-drop[i] * z / temperature + z * p);
        }
        if (gl) (*gl)[0] += acc;
      });
}

Tensor concrete_regularizer(const std::vector<ConcreteLayer>& layers, double lengthscale, std::size_t n_data) {
  if (n_data < 1) throw std::invalid_argument("concrete_regularizer: n_data must be positive");
  if (layers.empty()) throw std::invalid_argument("concrete_regularizer: no layers");
  const double n = static_cast<double>(n_data);
  Tensor total;
  for (const auto& l : layers) {
    const Tensor p = sigmoid(l.p_logit);
    const Tensor q = 1.0 - p;
    const Tensor weight_term = q * sum(square(l.weight)) * (lengthscale * lengthscale / (2.0 * n));
    const Tensor entropy_term = (p * log(p) + q * log(q)) * (static_cast<double>(l.input_channels) / n);
    const Tensor term = weight_term + entropy_term;
    total = total.defined() ? total + term : term;
  }
  return total;
}

ConcreteDropout::ConcreteDropout(ConcreteSpec spec) : spec_(spec) {
  if (!(spec_.temperature > 0)) throw std::invalid_argument("concrete temperature must be positive");
  if (!(spec_.init_p > 0 && spec_.init_p < 1)) throw std::invalid_argument("concrete init_p must be in (0, 1)");
}

nlohmann::json ConcreteDropout::config() const {
  return {{"temperature", spec_.temperature}, {"lengthscale", spec_.lengthscale}, {"init_p", spec_.init_p}};
}

void ConcreteDropout::attach(const model::UNet& net, model::ParameterStore& store, Rng&) {
  const double init = std::log(spec_.init_p) - std::log1p(-spec_.init_p);
  for (const auto& site : net.unit_sites()) {
    const Tensor logit = store.add("concrete." + site.name + ".p_logit", Tensor({1}, init));
    names_.push_back(site.name);
    layers_.push_back({net.conv_weight(site.conv_index), logit, net.conv_layers()[site.conv_index].in_channels});
  }
}

Tensor ConcreteDropout::unit_output(std::size_t site, const Tensor& h, const model::ForwardContext& ctx) {
  if (!ctx.stochastic) return h;
  if (!ctx.rng) throw std::invalid_argument("stochastic forward needs an Rng");
  return concrete_dropout(h, layers_.at(site).p_logit, spec_.temperature, *ctx.rng);
}

Tensor ConcreteDropout::extra_loss(std::size_t n_train) { return concrete_regularizer(layers_, spec_.lengthscale, n_train); }

std::vector<std::pair<std::string, double>> ConcreteDropout::dropout_probabilities() const {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) out.emplace_back(names_[i], sigmoid(layers_[i].p_logit.item()));
  return out;
}

}  // namespace uqseg::uq
