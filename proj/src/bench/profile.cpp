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

#include "uqseg/bench/profile.hpp"

#include <algorithm>
#include <chrono>
#include <unordered_set>

#include "uqseg/bench/config.hpp"
#include "uqseg/model/checkpoint.hpp"
#include "uqseg/model/loss.hpp"

namespace uqseg::bench {

using nlohmann::json;

void to_json(json& j, const ScalabilityRow& r) {
  j = json{{"method", r.method},
           {"train_epochs", r.train_epochs},
           {"train_seconds", r.train_seconds},
           {"inference_seconds", r.inference_seconds},
           {"total_params", r.total_params},
           {"params_size_mb", r.params_size_mb},
           {"pass_size_mb", r.pass_size_mb},
           {"train_epochs_per_member", r.train_epochs_per_member}};
}

void from_json(const json& j, ScalabilityRow& r) {
  r.method = j.at("method");
  r.train_epochs = j.at("train_epochs");
  r.train_seconds = j.at("train_seconds");
  r.inference_seconds = j.at("inference_seconds");
  r.total_params = j.at("total_params");
  r.params_size_mb = j.at("params_size_mb");
  r.pass_size_mb = j.at("pass_size_mb");
  r.train_epochs_per_member = j.at("train_epochs_per_member");
}

std::size_t count_parameters(const uq::MethodArtifacts& artifacts) {
  using uq::MethodTag;
  const MethodTag tag = artifacts.spec.tag;
  if (tag == MethodTag::swag || tag == MethodTag::multi_swag) {
    std::size_t n = 0;
    for (const auto& s : artifacts.swag) n += (2 + s.deviations().size()) * s.dim();
    return n;
  }
  const auto factory = uq::extension_factory();
  std::size_t n = 0;
  for (const auto& c : artifacts.members) n += model::load_segnet(c, factory)->params().parameter_count();
  return n;
}

std::size_t pass_bytes(model::SegNet& net, const Tensor& image, double dropout_p) {
  if (image.rank() != 3) throw ShapeError("pass_bytes expects an image [C, H, W]");
  const std::size_t m = net.members();
  Tensor x = reshape(image.detach(), {1, image.dim(0), image.dim(1), image.dim(2)});
  Rng rng(0, 0);
  model::ForwardContext ctx;
  ctx.training = true;
  ctx.stochastic = true;
  ctx.rng = &rng;
  ctx.dropout_p = dropout_p;
  ctx.bn_momentum = 0.0;  // leave the running statistics untouched
  if (m > 1) {
    for (std::size_t i = 0; i < m; ++i) ctx.members.push_back(i);
    x = model::tile_rows(x, m);
  }
  Tensor loss = model::dice_ce_loss(net.forward(x, ctx), Tensor({m, image.dim(1), image.dim(2)}));
  if (auto* ext = net.extension()) {
    const Tensor extra = ext->extra_loss(1);
    if (extra.defined()) loss = add(loss, extra);
  }

  std::size_t bytes = 0;
  std::unordered_set<const detail::TensorImpl*> seen;
  std::vector<const detail::TensorImpl*> stack{loss.impl()};
  seen.insert(loss.impl());
  while (!stack.empty()) {
    const auto* t = stack.back();
    stack.pop_back();
    const std::size_t size = t->data.size() * sizeof(double);
    if (t->node) bytes += size;
    if (t->requires_grad) bytes += size;
    if (!t->node) continue;
    for (const auto& p : t->node->parents) {
      if (p && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  return bytes;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ScalabilityRow profile(const uq::MethodArtifacts& artifacts, const Tensor& image,
                       const std::vector<data::LabeledImage>& bn_images, const ProfileOptions& options) {
  using uq::MethodTag;
  if (options.repeats < 5) throw std::invalid_argument("profile needs at least 5 timed repetitions");
  const auto& spec = artifacts.spec;
  ScalabilityRow row;
  row.method = spec.name();
  row.train_epochs = artifacts.train_epochs();
  row.train_seconds = artifacts.train_seconds();
  row.train_epochs_per_member =
      static_cast<double>(row.train_epochs) / static_cast<double>(std::max<std::size_t>(1, artifacts.members.size()));
  row.total_params = count_parameters(artifacts);
  row.params_size_mb = static_cast<double>(row.total_params * options.bytes_per_param) / 1e6;

  const auto factory = uq::extension_factory();
  std::size_t pass = 0;
  for (const auto& c : artifacts.members) {
    auto net = model::load_segnet(c, factory);
    pass += pass_bytes(*net, image, uq::training_dropout(spec));
  }
  row.pass_size_mb = static_cast<double>(pass) / 1e6;

  uq::MethodArtifacts one = artifacts;
  if (is_sampled(spec.tag)) one.spec.num_samples = spec.tag == MethodTag::multi_swag ? artifacts.members.size() : 1;
  uq::Predictor predictor(one, bn_images);
  Rng rng(artifacts.seed, 0x9f0f);
  predictor.predict(image, rng);  // warm-up
  std::vector<double> times;
  for (std::size_t i = 0; i < options.repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    predictor.predict(image, rng);
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  row.inference_seconds = median(times);
  return row;
}

}  // namespace uqseg::bench
