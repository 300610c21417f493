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

#include "uqseg/model/segnet.hpp"

#include <stdexcept>

namespace uqseg::model {

Tensor tile_rows(const Tensor& x, std::size_t times) {
  if (times == 1) return x;
  Shape shape = x.shape();
  shape[0] *= times;
  std::vector<double> v;
  v.reserve(x.numel() * times);
  for (std::size_t m = 0; m < times; ++m) v.insert(v.end(), x.data().begin(), x.data().end());
  return Tensor(std::move(shape), std::move(v));
}

SegNet::SegNet(const UNetConfig& config, std::uint64_t init_seed, double dropout_p,
               std::unique_ptr<NetworkExtension> extension)
    : init_seed_(init_seed), dropout_p_(dropout_p), extension_(std::move(extension)) {
  if (dropout_p < 0.0 || dropout_p >= 1.0) throw std::invalid_argument("dropout_p must be in [0, 1)");
  Rng rng(init_seed, 0);
  unet_ = std::make_unique<UNet>(config, store_, rng);
  if (extension_) {
    Rng ext_rng = rng.derive(1);
    extension_->attach(*unet_, store_, ext_rng);
  }
}

Tensor SegNet::forward(const Tensor& x, const ForwardContext& ctx) { return unet_->forward(x, ctx, extension_.get()); }

Tensor SegNet::predict_probs(const Tensor& image, ForwardContext ctx) {
  if (image.rank() != 3) throw ShapeError("predict_probs expects [C,H,W], got " + to_string(image.shape()));
  NoGradGuard no_grad;
  ctx.training = false;
  if (ctx.members.size() > 1) throw std::invalid_argument("predict_probs takes one member");
  const Tensor x = reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
  const Tensor p = softmax_channel(forward(x, ctx));
  return reshape(p, {p.dim(1), p.dim(2), p.dim(3)});
}

Tensor SegNet::predict_mean_probs(const Tensor& image) {
  const std::size_t m = members();
  Tensor acc;
  for (std::size_t i = 0; i < m; ++i) {
    ForwardContext ctx;
    if (m > 1) ctx.members = {i};
    const Tensor p = predict_probs(image, ctx);
    if (!acc.defined()) {
      acc = p.clone();
    } else {
      auto a = acc.mutable_data();
      const auto d = p.data();
      for (std::size_t k = 0; k < a.size(); ++k) a[k] += d[k];
    }
  }
  if (m > 1) {
    for (auto& v : acc.mutable_data()) v /= static_cast<double>(m);
  }
  return acc;
}

std::vector<Tensor> SegNet::network_parameters() const {
  std::vector<Tensor> out;
  for (const auto& e : store_.entries()) {
    if (e.trainable && (!extension_ || extension_->is_network_parameter(e.name))) out.push_back(e.tensor);
  }
  return out;
}

nlohmann::json SegNet::describe() const {
  nlohmann::json j{{"unet", config()}, {"init_seed", init_seed_}, {"dropout_p", dropout_p_}};
  j["extension"] = extension_ ? nlohmann::json{{"tag", extension_->tag()}, {"config", extension_->config()}}
                              : nlohmann::json(nullptr);
  return j;
}

void SegNet::recompute_batchnorm(const std::vector<Tensor>& batches) {
  if (batches.empty()) throw std::invalid_argument("recompute_batchnorm needs at least one batch");
  NoGradGuard no_grad;
  for (auto& s : unet_->batchnorm_stats()) {
    for (auto& v : s.running_mean.mutable_data()) v = 0.0;
    for (auto& v : s.running_var.mutable_data()) v = 1.0;
  }
  const std::size_t m = members();
  for (std::size_t b = 0; b < batches.size(); ++b) {
    ForwardContext ctx;
    ctx.training = true;
    ctx.bn_momentum = 1.0 / static_cast<double>(b + 1);
    const Tensor x = tile_rows(batches[b], m);
    if (m > 1) {
      for (std::size_t i = 0; i < m; ++i) ctx.members.insert(ctx.members.end(), batches[b].dim(0), i);
    }
    forward(x, ctx);
  }
}

std::unique_ptr<SegNet> build_segnet(const nlohmann::json& description, const ExtensionFactory& factory) {
  const auto cfg = description.at("unet").get<UNetConfig>();
  std::unique_ptr<NetworkExtension> ext;
  if (!description.at("extension").is_null()) {
    if (!factory) throw std::invalid_argument("network has an extension but no factory was given");
    ext = factory(description.at("extension"));
  }
  return std::make_unique<SegNet>(cfg, description.at("init_seed").get<std::uint64_t>(),
                                  description.at("dropout_p").get<double>(), std::move(ext));
}

}  // namespace uqseg::model
