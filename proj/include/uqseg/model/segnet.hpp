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

#include <cstdint>
#include <functional>
#include <memory>

#include "json.hpp"
#include "uqseg/model/unet.hpp"

namespace uqseg::model {

/// A U-Net with its parameters, a plain-dropout rate used while stochastic,
/// and an optional method extension.
class SegNet {
 public:
  SegNet(const UNetConfig& config, std::uint64_t init_seed, double dropout_p = 0.0,
         std::unique_ptr<NetworkExtension> extension = nullptr);

  SegNet(const SegNet&) = delete;
  SegNet& operator=(const SegNet&) = delete;

  /// Logits for a batch [N, in_channels, H, W].
  Tensor forward(const Tensor& x, const ForwardContext& ctx);

  /// Softmax probabilities [C, H, W] for one image [in_channels, H, W].
  /// Batchnorm runs in eval mode; `ctx.training` is ignored.
  Tensor predict_probs(const Tensor& image, ForwardContext ctx);

  /// Deterministic prediction: no dropout or weight noise, probabilities
  /// averaged over members.
  Tensor predict_mean_probs(const Tensor& image);

  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  UNet& unet() { return *unet_; }
  const UNet& unet() const { return *unet_; }
  const UNetConfig& config() const { return unet_->config(); }
  NetworkExtension* extension() const { return extension_.get(); }
  std::size_t members() const { return extension_ ? extension_->members() : 1; }
  double dropout_p() const { return dropout_p_; }
  std::uint64_t init_seed() const { return init_seed_; }

  /// Parameters updated by the main optimizer.
  std::vector<Tensor> network_parameters() const;

  /// Everything needed to rebuild the structure (not the weights).
  nlohmann::json describe() const;

  /// Resets batchnorm running statistics and re-estimates them as the
  /// cumulative average over `batches` (train-mode forward, no gradients).
  void recompute_batchnorm(const std::vector<Tensor>& batches);

 private:
  std::uint64_t init_seed_;
  double dropout_p_;
  ParameterStore store_;
  std::unique_ptr<UNet> unet_;
  std::unique_ptr<NetworkExtension> extension_;
};

/// `times` copies of `x` stacked along the first axis (no gradient).
Tensor tile_rows(const Tensor& x, std::size_t times);

using ExtensionFactory = std::function<std::unique_ptr<NetworkExtension>(const nlohmann::json&)>;

/// Rebuilds a network from SegNet::describe() output. Weights are freshly
/// initialized; load a checkpoint to restore them.
std::unique_ptr<SegNet> build_segnet(const nlohmann::json& description, const ExtensionFactory& factory);

}  // namespace uqseg::model
