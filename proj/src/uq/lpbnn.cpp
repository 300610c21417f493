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

#include "uqseg/uq/lpbnn.hpp"

#include <cmath>
#include <stdexcept>

#include "uqseg/core/ops.hpp"
#include "uqseg/uq/rank1.hpp"

namespace uqseg::uq {
namespace {

constexpr const char* kVaeTag = ".vae.";

Tensor uniform_table(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor({rows, cols}, std::move(v));
}

Tensor normal_like(const Tensor& t, Rng& rng) {
  std::vector<double> v(t.numel());
  for (auto& x : v) x = rng.normal();
  return Tensor(t.shape(), std::move(v));
}

}  // namespace

Tensor LayerVae::Linear::operator()(const Tensor& x) const { return add_channels(matmul(x, weight), bias); }

LayerVae::LayerVae(const std::string& prefix, std::size_t dim, const LpbnnSpec& spec, model::ParameterStore& store,
                   Rng& rng)
    : dim_(dim), latent_(spec.latent_dim), kl_weight_(spec.kl_weight) {
  if (latent_ < 1 || latent_ >= dim) {
    throw std::invalid_argument("VAE latent dimension " + std::to_string(latent_) + " must be below the vector length " +
                                std::to_string(dim));
  }
  const auto linear = [&](const std::string& name, std::size_t in, std::size_t out, double bias = 0.0,
                          double gain = 1.0) {
    Linear l;
    l.weight = store.add(prefix + name + ".weight", uniform_table(in, out, gain * std::sqrt(6.0 / double(in + out)), rng));
    l.bias = store.add(prefix + name + ".bias", Tensor({out}, bias));
    return l;
  };
  const std::size_t h = spec.hidden;
  enc_hidden_ = linear(".enc_hidden", dim, h);
  enc_mean_ = linear(".enc_mean", h, latent_);
  enc_logstd_ = linear(".enc_logstd", h, latent_, -2.0, 0.1);
  dec_hidden_ = linear(".dec_hidden", latent_, h);
  // rank-1 vectors sit near 1, so the decoder starts out predicting 1
  dec_out_ = linear(".dec_out", h, dim, 1.0, 0.1);
}

LayerVae::Encoding LayerVae::encode(const Tensor& r) const {
  if (r.rank() != 2 || r.dim(1) != dim_) throw ShapeError("LayerVae::encode: expected [N, " + std::to_string(dim_) + "]");
  const Tensor h = tanh(enc_hidden_(r));
  return {enc_mean_(h), enc_logstd_(h)};
}

Tensor LayerVae::decode(const Tensor& z) const {
  if (z.rank() != 2 || z.dim(1) != latent_) throw ShapeError("LayerVae::decode: expected [N, " + std::to_string(latent_) + "]");
  return dec_out_(tanh(dec_hidden_(z)));
}

Tensor LayerVae::sample_latent(const Encoding& e, Rng& rng) const {
  return e.mean + exp(e.logstd) * normal_like(e.mean, rng);
}

Tensor LayerVae::sample(const Tensor& r, Rng& rng) const { return decode(sample_latent(encode(r), rng)); }

LayerVae::Loss LayerVae::loss(const Tensor& r, Rng& rng) const {
  const Encoding e = encode(r);
  const Tensor recon = decode(sample_latent(e, rng));
  const double rows = static_cast<double>(r.dim(0));
  Loss l;
  l.reconstruction = sum(square(recon - r)) * (1.0 / rows);
  // KL(N(m, s^2) || N(0, 1)) = (m^2 + s^2 - 1) / 2 - log s per latent entry
  const Tensor per_entry = (square(e.mean) + exp(e.logstd * 2.0)) * 0.5 - e.logstd;
  l.kl = (sum(per_entry) - 0.5 * static_cast<double>(e.mean.numel())) * (1.0 / rows);
  l.total = l.reconstruction + l.kl * kl_weight_;
  return l;
}

std::vector<Tensor> LayerVae::parameters() const {
  std::vector<Tensor> out;
  for (const Linear* l : {&enc_hidden_, &enc_mean_, &enc_logstd_, &dec_hidden_, &dec_out_}) {
    out.push_back(l->weight);
    out.push_back(l->bias);
  }
  return out;
}

double fit_layer_vae(LayerVae& vae, const Tensor& vectors, std::size_t steps, double learning_rate, Rng& rng) {
  auto params = vae.parameters();
  model::Adam adam(params, learning_rate);
  double last = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    adam.zero_grad();
    const Tensor loss = vae.loss(vectors, rng).total;
    last = loss.item();
    loss.backward();
    adam.step();
  }
  return last;
}

LpBnn::LpBnn(std::size_t members, LpbnnSpec spec, double init_std) : members_(members), spec_(spec), init_std_(init_std) {
  if (members < 1) throw std::invalid_argument("LP-BNN needs at least one member");
}

nlohmann::json LpBnn::config() const {
  return {{"members", members_},
          {"latent_dim", spec_.latent_dim},
          {"hidden", spec_.hidden},
          {"kl_weight", spec_.kl_weight},
          {"learning_rate", spec_.learning_rate},
          {"init_std", init_std_}};
}

void LpBnn::attach(const model::UNet& net, model::ParameterStore& store, Rng& rng) {
  for (const auto& conv : net.conv_layers()) {
    const std::string prefix = "lp_bnn." + conv.name;
    std::vector<double> r(members_ * conv.out_channels), s(members_ * conv.in_channels);
    for (auto& v : r) v = rng.normal(1.0, init_std_);
    for (auto& v : s) v = rng.normal(1.0, init_std_);
    r_.push_back(store.add(prefix + ".r", Tensor({members_, conv.out_channels}, std::move(r))));
    s_.push_back(store.add(prefix + ".s", Tensor({members_, conv.in_channels}, std::move(s))));
    if (conv.out_channels > spec_.latent_dim) {
      vaes_.push_back(std::make_unique<LayerVae>(prefix + ".vae", conv.out_channels, spec_, store, rng));
      for (const auto& p : vaes_.back()->parameters()) vae_params_.push_back(p);
    } else {
      vaes_.push_back(nullptr);
    }
  }
  vae_optimizer_ = model::make_optimizer(model::OptimizerKind::adam, vae_params_, spec_.learning_rate);
}

model::FastWeights LpBnn::fast_weights(std::size_t conv, std::size_t batch, const model::ForwardContext& ctx) {
  const auto rows = member_rows(ctx, batch, members_);
  const Tensor s = gather_rows(s_.at(conv), rows);
  const Tensor r = gather_rows(r_.at(conv), rows);
  const LayerVae* vae = vaes_.at(conv).get();
  if (!vae) return {r, s};
  const auto enc = vae->encode(r);
  if (!ctx.stochastic) return {vae->decode(enc.mean), s};
  if (!ctx.rng) throw std::invalid_argument("stochastic forward needs an Rng");
  return {vae->decode(vae->sample_latent(enc, *ctx.rng)), s};
}

void LpBnn::after_step(Rng& rng) {
  if (vae_params_.empty()) return;
  vae_optimizer_->zero_grad();
  Tensor total;
  std::size_t count = 0;
  for (std::size_t i = 0; i < vaes_.size(); ++i) {
    if (!vaes_[i]) continue;
    const Tensor l = vaes_[i]->loss(r_[i].detach(), rng).total;
    total = total.defined() ? total + l : l;
    ++count;
  }
  last_vae_loss_ = total.item() / static_cast<double>(count);
  total.backward();
  vae_optimizer_->step();
}

bool LpBnn::is_network_parameter(const std::string& name) const { return name.find(kVaeTag) == std::string::npos; }

}  // namespace uqseg::uq
