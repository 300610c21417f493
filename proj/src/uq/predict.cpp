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

#include <chrono>
#include <stdexcept>

#include "uqseg/model/train.hpp"
#include "uqseg/uq/aggregate.hpp"
#include "uqseg/uq/methods.hpp"

namespace uqseg::uq {
namespace {

constexpr std::uint64_t kSwagSampleStream = 0x5a65;

std::vector<Tensor> batches_of(const std::vector<data::LabeledImage>& images, std::size_t batch) {
  std::vector<Tensor> out;
  for (std::size_t start = 0; start < images.size(); start += batch) {
    std::vector<const data::LabeledImage*> items;
    for (std::size_t i = start; i < std::min(images.size(), start + batch); ++i) items.push_back(&images[i]);
    out.push_back(model::stack_batch(items).first);
  }
  return out;
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

Predictor::Predictor(const MethodArtifacts& artifacts, const std::vector<data::LabeledImage>& bn_images,
                     std::size_t bn_batch)
    : spec_(artifacts.spec) {
  if (spec_.num_samples == 0) throw std::invalid_argument("num_samples must be positive");
  check_artifacts(artifacts);
  const auto factory = extension_factory();
  for (const auto& c : artifacts.members) nets_.push_back(model::load_segnet(c, factory));

  const MethodTag tag = spec_.tag;
  if (tag != MethodTag::swa && tag != MethodTag::swag && tag != MethodTag::multi_swag) return;
  if (artifacts.swag.size() != nets_.size()) throw std::invalid_argument("SWAG statistics missing from artifacts");
  if (bn_images.empty()) throw std::invalid_argument(spec_.name() + " needs images to re-estimate batchnorm statistics");
  if (bn_batch == 0) throw std::invalid_argument("bn_batch must be positive");
  const auto batches = batches_of(bn_images, bn_batch);

  const auto settle = [&](std::size_t net, const WeightVector& w) {
    nets_[net]->params().assign(w, true);
    nets_[net]->recompute_batchnorm(batches);
    states_.push_back(nets_[net]->params().flatten(false));
    state_net_.push_back(net);
  };
  if (tag == MethodTag::swa) {
    settle(0, artifacts.swag[0].swa_mean());
    return;
  }
  const std::size_t per_member = tag == MethodTag::swag ? spec_.num_samples : ceil_div(spec_.num_samples, nets_.size());
  for (std::size_t m = 0; m < nets_.size(); ++m) {
    const auto posterior = SwagPosterior::fit(artifacts.swag[m]);
    Rng rng = Rng(artifacts.seed, kSwagSampleStream).derive(m);
    for (std::size_t t = 0; t < per_member; ++t) settle(m, posterior.sample(spec_.swag.scale, rng));
  }
}

std::size_t Predictor::passes() const {
  switch (spec_.tag) {
    case MethodTag::base:
    case MethodTag::swa:
      return 1;
    case MethodTag::ensemble:
      return nets_.size();
    case MethodTag::batch_ensemble:
      return spec_.num_members;
    case MethodTag::swag:
    case MethodTag::multi_swag:
      return states_.size();
    default:
      return spec_.num_samples;
  }
}

PredictiveResult Predictor::predict(const Tensor& image, Rng& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  PredictiveResult r;
  r.method = spec_.name();
  std::vector<Tensor> samples;
  model::ForwardContext stochastic;
  stochastic.stochastic = true;
  stochastic.rng = &rng;

  switch (spec_.tag) {
    case MethodTag::base:
      r.mean_probs = nets_[0]->predict_probs(image, {});
      break;
    case MethodTag::swa:
      nets_[0]->params().assign(states_[0], false);
      r.mean_probs = nets_[0]->predict_probs(image, {});
      break;
    case MethodTag::mc_dropout:
    case MethodTag::concrete_dropout:
      stochastic.dropout_p = spec_.tag == MethodTag::mc_dropout ? spec_.dropout_p : 0.0;
      for (std::size_t t = 0; t < spec_.num_samples; ++t) samples.push_back(nets_[0]->predict_probs(image, stochastic));
      break;
    case MethodTag::ensemble:
      for (auto& net : nets_) samples.push_back(net->predict_probs(image, {}));
      break;
    case MethodTag::batch_ensemble:
      for (std::size_t m = 0; m < spec_.num_members; ++m) {
        model::ForwardContext ctx;
        ctx.members = {m};
        samples.push_back(nets_[0]->predict_probs(image, ctx));
      }
      break;
    case MethodTag::rank1_bnn:
    case MethodTag::lp_bnn:
      for (std::size_t t = 0; t < spec_.num_samples; ++t) {
        stochastic.members = {t % spec_.num_members};
        samples.push_back(nets_[0]->predict_probs(image, stochastic));
      }
      break;
    case MethodTag::swag:
    case MethodTag::multi_swag:
      for (std::size_t s = 0; s < states_.size(); ++s) {
        auto& net = *nets_[state_net_[s]];
        net.params().assign(states_[s], false);
        samples.push_back(net.predict_probs(image, {}));
      }
      break;
  }

  if (samples.empty()) {
    r.uncertainty_map = base_uq(r.mean_probs);
  } else {
    auto agg = aggregate_samples(samples, spec_.uncertainty);
    r.mean_probs = std::move(agg.mean_probs);
    r.uncertainty_map = std::move(agg.uncertainty);
    r.samples = std::move(samples);
  }
  r.inference_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

PredictiveResult predict(const MethodArtifacts& artifacts, const Tensor& image, Rng& rng,
                         const std::vector<data::LabeledImage>& bn_images) {
  Predictor p(artifacts, bn_images);
  return p.predict(image, rng);
}

}  // namespace uqseg::uq
