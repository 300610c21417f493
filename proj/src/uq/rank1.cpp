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

#include "uqseg/uq/rank1.hpp"

#include <cmath>
#include <stdexcept>

#include "uqseg/core/ops.hpp"
#include "uqseg/model/loss.hpp"

namespace uqseg::uq {
namespace {

Tensor gaussian_table(std::size_t rows, std::size_t cols, double mean, double stddev, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.normal(mean, stddev);
  return Tensor({rows, cols}, std::move(v));
}

}  // namespace

std::vector<std::size_t> member_rows(const model::ForwardContext& ctx, std::size_t batch, std::size_t members) {
  if (ctx.members.empty()) return std::vector<std::size_t>(batch, 0);
  if (ctx.members.size() != batch) {
    throw std::invalid_argument("member list has " + std::to_string(ctx.members.size()) + " entries for a batch of " +
                                std::to_string(batch));
  }
  for (std::size_t m : ctx.members) {
    if (m >= members) {
      throw std::out_of_range("member index " + std::to_string(m) + " out of range for " + std::to_string(members) +
                              " members");
    }
  }
  return ctx.members;
}

BatchEnsemble::BatchEnsemble(std::size_t members, double init_std) : members_(members), init_std_(init_std) {
  if (members < 1) throw std::invalid_argument("batch ensemble needs at least one member");
  if (!(init_std >= 0)) throw std::invalid_argument("batch ensemble init_std must be non-negative");
}

nlohmann::json BatchEnsemble::config() const { return {{"members", members_}, {"init_std", init_std_}}; }

void BatchEnsemble::attach(const model::UNet& net, model::ParameterStore& store, Rng& rng) {
  for (const auto& conv : net.conv_layers()) {
    const std::string prefix = "batch_ensemble." + conv.name;
    r_.push_back(store.add(prefix + ".r", gaussian_table(members_, conv.out_channels, 1.0, init_std_, rng)));
    s_.push_back(store.add(prefix + ".s", gaussian_table(members_, conv.in_channels, 1.0, init_std_, rng)));
  }
}

model::FastWeights BatchEnsemble::fast_weights(std::size_t conv, std::size_t batch, const model::ForwardContext& ctx) {
  const auto rows = member_rows(ctx, batch, members_);
  return {gather_rows(r_.at(conv), rows), gather_rows(s_.at(conv), rows)};
}

Tensor gaussian_kl(const Tensor& mean, const Tensor& logstd, double prior_mean, double prior_std) {
  if (mean.shape() != logstd.shape()) throw ShapeError("gaussian_kl: mean and logstd differ in shape");
  if (!(prior_std > 0)) throw std::invalid_argument("gaussian_kl: prior_std must be positive");
  // With d = log(std / prior_std) and m = (mean - prior_mean) / prior_std each
  // entry is -d + exp(2d) / 2 + m^2 / 2 - 1/2, which is exactly 0 at the prior.
  const Tensor d = logstd - std::log(prior_std);
  const Tensor m = (mean - prior_mean) * (1.0 / prior_std);
  const Tensor per_entry = exp(d * 2.0) * 0.5 - d + square(m) * 0.5;
  return sum(per_entry) - 0.5 * static_cast<double>(mean.numel());
}

Rank1Bnn::Rank1Bnn(std::size_t members, Rank1Spec spec) : members_(members), spec_(spec) {
  if (members < 1) throw std::invalid_argument("rank-1 BNN needs at least one member");
  if (!(spec.prior_std > 0)) throw std::invalid_argument("rank-1 prior_std must be positive");
}

nlohmann::json Rank1Bnn::config() const {
  return {{"members", members_}, {"prior_mean", spec_.prior_mean}, {"prior_std", spec_.prior_std}};
}

void Rank1Bnn::attach(const model::UNet& net, model::ParameterStore& store, Rng& rng) {
  // means start as a draw from the prior, standard deviations at half the prior's
  const double logstd0 = std::log(0.5 * spec_.prior_std);
  const auto factor = [&](const std::string& name, std::size_t width) {
    Factor f;
    f.mean = store.add(name + ".mean", gaussian_table(members_, width, spec_.prior_mean, spec_.prior_std, rng));
    f.logstd = store.add(name + ".logstd", Tensor({members_, width}, logstd0));
    return f;
  };
  for (const auto& conv : net.conv_layers()) {
    const std::string prefix = "rank1." + conv.name;
    r_.push_back(factor(prefix + ".r", conv.out_channels));
    s_.push_back(factor(prefix + ".s", conv.in_channels));
  }
}

Tensor Rank1Bnn::draw(const Factor& f, const std::vector<std::size_t>& rows, const model::ForwardContext& ctx) const {
  const Tensor mean = gather_rows(f.mean, rows);
  if (!ctx.stochastic) return mean;
  if (!ctx.rng) throw std::invalid_argument("stochastic forward needs an Rng");
  std::vector<double> eps(mean.numel());
  for (auto& e : eps) e = ctx.rng->normal();
  return mean + exp(gather_rows(f.logstd, rows)) * Tensor(mean.shape(), std::move(eps));
}

model::FastWeights Rank1Bnn::fast_weights(std::size_t conv, std::size_t batch, const model::ForwardContext& ctx) {
  const auto rows = member_rows(ctx, batch, members_);
  return {draw(r_.at(conv), rows, ctx), draw(s_.at(conv), rows, ctx)};
}

Tensor Rank1Bnn::kl() const {
  Tensor total;
  for (const auto* table : {&r_, &s_}) {
    for (const auto& f : *table) {
      const Tensor k = gaussian_kl(f.mean, f.logstd, spec_.prior_mean, spec_.prior_std);
      total = total.defined() ? total + k : k;
    }
  }
  return total;
}

Tensor Rank1Bnn::extra_loss(std::size_t n_train) {
  if (n_train == 0) throw std::invalid_argument("rank-1 KL needs a positive training-set size");
  return kl() * (1.0 / static_cast<double>(n_train));
}

ElboTerms rank1_elbo_terms(model::SegNet& net, const Tensor& x, const Tensor& labels, Rng& rng) {
  auto* ext = dynamic_cast<Rank1Bnn*>(net.extension());
  if (!ext) throw std::invalid_argument("rank1_elbo_terms needs a rank-1 BNN");
  const std::size_t m = net.members(), b = x.dim(0);
  model::ForwardContext ctx;
  ctx.training = true;
  ctx.stochastic = true;
  ctx.rng = &rng;
  for (std::size_t i = 0; i < m; ++i) ctx.members.insert(ctx.members.end(), b, i);
  const Tensor logits = net.forward(model::tile_rows(x, m), ctx);
  return {model::dice_ce_loss(logits, model::tile_rows(labels, m)), ext->kl()};
}

}  // namespace uqseg::uq
