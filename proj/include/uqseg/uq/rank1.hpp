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
#include <vector>

#include "uqseg/core/rng.hpp"
#include "uqseg/core/tensor.hpp"
#include "uqseg/model/segnet.hpp"
#include "uqseg/uq/method.hpp"

namespace uqseg::uq {

/// Member index of every batch row; an empty list means member 0 throughout.
/// Throws std::out_of_range for an index >= members.
std::vector<std::size_t> member_rows(const model::ForwardContext& ctx, std::size_t batch, std::size_t members);

/// Shared weights with per-member rank-1 scales on every convolution:
/// r [M, Cout] on the output side and s [M, Cin] on the input side.
class BatchEnsemble : public model::NetworkExtension {
 public:
  static constexpr double kDefaultInitStd = 0.5;

  explicit BatchEnsemble(std::size_t members, double init_std = kDefaultInitStd);

  std::string tag() const override { return "batch_ensemble"; }
  nlohmann::json config() const override;
  void attach(const model::UNet& net, model::ParameterStore& store, Rng& rng) override;
  std::size_t members() const override { return members_; }
  model::FastWeights fast_weights(std::size_t conv, std::size_t batch, const model::ForwardContext& ctx) override;

  Tensor r(std::size_t conv) const { return r_.at(conv); }
  Tensor s(std::size_t conv) const { return s_.at(conv); }

 private:
  std::size_t members_;
  double init_std_;
  std::vector<Tensor> r_, s_;
};

/// Closed-form sum over entries of KL(N(mean, exp(logstd)^2) || N(prior_mean, prior_std^2)).
Tensor gaussian_kl(const Tensor& mean, const Tensor& logstd, double prior_mean, double prior_std);

/// Rank-1 BNN: a factorized Gaussian over every member's r and s vectors.
/// Stochastic passes draw r = mean + std * eps per batch row; deterministic
/// passes use the means.
class Rank1Bnn : public model::NetworkExtension {
 public:
  Rank1Bnn(std::size_t members, Rank1Spec spec);

  std::string tag() const override { return "rank1_bnn"; }
  nlohmann::json config() const override;
  void attach(const model::UNet& net, model::ParameterStore& store, Rng& rng) override;
  std::size_t members() const override { return members_; }
  model::FastWeights fast_weights(std::size_t conv, std::size_t batch, const model::ForwardContext& ctx) override;
  /// kl() / n_train.
  Tensor extra_loss(std::size_t n_train) override;

  /// KL of the whole posterior from the prior, summed over members and layers.
  Tensor kl() const;

  struct Factor {
    Tensor mean, logstd;  // [M, C]
  };
  const Factor& r(std::size_t conv) const { return r_.at(conv); }
  const Factor& s(std::size_t conv) const { return s_.at(conv); }

 private:
  Tensor draw(const Factor& f, const std::vector<std::size_t>& rows, const model::ForwardContext& ctx) const;

  std::size_t members_;
  Rank1Spec spec_;
  std::vector<Factor> r_, s_;
};

struct ElboTerms {
  Tensor nll;  // dice + cross-entropy of one stochastic pass
  Tensor kl;
};

/// Both ELBO terms for a minibatch, with the batch tiled once per member as
/// in training. The objective is nll + kl / n_train.
ElboTerms rank1_elbo_terms(model::SegNet& net, const Tensor& x, const Tensor& labels, Rng& rng);

}  // namespace uqseg::uq
