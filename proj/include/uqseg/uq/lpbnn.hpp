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

#include "uqseg/core/rng.hpp"
#include "uqseg/core/tensor.hpp"
#include "uqseg/model/optimizer.hpp"
#include "uqseg/model/segnet.hpp"
#include "uqseg/uq/method.hpp"

namespace uqseg::uq {

/// Small VAE over the rank-1 vectors of one layer:
/// encoder dim -> hidden (tanh) -> (mean, logstd) of the latent,
/// decoder latent -> hidden (tanh) -> dim.
class LayerVae {
 public:
  /// Registers its parameters in `store` under `prefix`. Throws
  /// std::invalid_argument unless latent_dim < dim.
  LayerVae(const std::string& prefix, std::size_t dim, const LpbnnSpec& spec, model::ParameterStore& store, Rng& rng);

  struct Encoding {
    Tensor mean;    // [N, latent]
    Tensor logstd;  // [N, latent]
  };
  struct Loss {
    Tensor reconstruction;  // squared error summed over entries, averaged over rows
    Tensor kl;              // KL(q(z|r) || N(0, I)), averaged over rows
    Tensor total;           // reconstruction + kl_weight * kl
  };

  Encoding encode(const Tensor& r) const;
  Tensor decode(const Tensor& z) const;
  /// z = mean + exp(logstd) * eps.
  Tensor sample_latent(const Encoding& e, Rng& rng) const;
  /// A fresh vector per row of `r`, decoded from z ~ q(z | r).
  Tensor sample(const Tensor& r, Rng& rng) const;
  Loss loss(const Tensor& r, Rng& rng) const;

  std::vector<Tensor> parameters() const;
  std::size_t dim() const { return dim_; }
  std::size_t latent_dim() const { return latent_; }

 private:
  struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]
    Tensor operator()(const Tensor& x) const;
  };

  std::size_t dim_, latent_;
  double kl_weight_;
  Linear enc_hidden_, enc_mean_, enc_logstd_, dec_hidden_, dec_out_;
};

/// Fits `vae` to the rows of `vectors` with Adam for `steps` steps.
/// Returns the final loss.
double fit_layer_vae(LayerVae& vae, const Tensor& vectors, std::size_t steps, double learning_rate, Rng& rng);

/// Batch ensemble whose output-side vectors r pass through a per-layer VAE.
/// Training forwards decode a latent drawn from q(z | r_i); deterministic
/// passes decode the latent mean. Layers with at most `latent_dim` output
/// channels keep plain r vectors. The VAEs are trained by their own
/// optimizer, one step after every network step; s vectors are point
/// estimates trained with the network.
class LpBnn : public model::NetworkExtension {
 public:
  LpBnn(std::size_t members, LpbnnSpec spec, double init_std = 0.5);

  std::string tag() const override { return "lp_bnn"; }
  nlohmann::json config() const override;
  void attach(const model::UNet& net, model::ParameterStore& store, Rng& rng) override;
  std::size_t members() const override { return members_; }
  model::FastWeights fast_weights(std::size_t conv, std::size_t batch, const model::ForwardContext& ctx) override;
  void after_step(Rng& rng) override;
  bool is_network_parameter(const std::string& name) const override;

  /// The VAE of a convolution, or null when that layer keeps plain r vectors.
  const LayerVae* vae(std::size_t conv) const { return vaes_.at(conv).get(); }
  /// Mean VAE loss of the last after_step call.
  double last_vae_loss() const { return last_vae_loss_; }

 private:
  std::size_t members_;
  LpbnnSpec spec_;
  double init_std_;
  std::vector<Tensor> r_, s_;
  std::vector<std::unique_ptr<LayerVae>> vaes_;
  std::unique_ptr<model::Optimizer> vae_optimizer_;
  std::vector<Tensor> vae_params_;
  double last_vae_loss_ = 0.0;
};

}  // namespace uqseg::uq
