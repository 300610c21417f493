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
#include <string>
#include <vector>

#include "json.hpp"
#include "uqseg/core/ops.hpp"
#include "uqseg/core/rng.hpp"
#include "uqseg/core/tensor.hpp"
#include "uqseg/model/params.hpp"

namespace uqseg::model {

struct UNetConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 2;
  std::vector<std::size_t> encoder_channels{16, 32, 64};
  std::size_t residual_units_per_level = 2;
  double prelu_init = 0.25;

  void validate() const;
  std::size_t levels() const { return encoder_channels.size(); }
  bool operator==(const UNetConfig&) const = default;
};

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);

/// Per-call switches for a forward pass.
struct ForwardContext {
  bool training = false;    // batchnorm uses batch moments and updates running stats
  bool stochastic = false;  // draw dropout masks and weight perturbations
  Rng* rng = nullptr;       // required when stochastic
  double dropout_p = 0.0;   // plain dropout at every unit site while stochastic
  /// Member index per batch row. Empty means member 0 for every row.
  std::vector<std::size_t> members;
  double bn_momentum = kBatchNormMomentum;
};

/// Per-row rank-1 scales for one convolution: r [N, Cout], s [N, Cin].
/// Undefined tensors leave that side unscaled.
struct FastWeights {
  Tensor r;
  Tensor s;
};

struct ConvLayerInfo {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  bool transposed = false;
};

/// A residual unit's second convolution output, where dropout-style methods
/// act (before the residual addition).
struct UnitSite {
  std::string name;
  std::size_t conv_index = 0;  // the unit's second convolution
  std::size_t channels = 0;
};

class UNet;

/// Method-specific additions to the shared network.
class NetworkExtension {
 public:
  virtual ~NetworkExtension() = default;
  virtual std::string tag() const = 0;
  virtual nlohmann::json config() const = 0;
  /// Called once after the network is built; registers extra parameters.
  virtual void attach(const UNet& net, ParameterStore& store, Rng& rng) = 0;
  /// Number of jointly trained members sharing the base weights.
  virtual std::size_t members() const { return 1; }
  virtual FastWeights fast_weights(std::size_t /*conv_index*/, std::size_t /*batch*/, const ForwardContext& /*ctx*/) {
    return {};
  }
  virtual Tensor unit_output(std::size_t /*site*/, const Tensor& h, const ForwardContext& /*ctx*/) { return h; }
  /// Additional objective terms for one minibatch, already scaled by the
  /// training-set size where that applies. Undefined when there are none.
  virtual Tensor extra_loss(std::size_t /*n_train*/) { return {}; }
  /// Runs after every network optimizer step.
  virtual void after_step(Rng& /*rng*/) {}
  /// False for parameters trained by the extension itself.
  virtual bool is_network_parameter(const std::string& /*name*/) const { return true; }
};

/// 2D residual U-Net. Encoder level 0 keeps the input resolution; each
/// further level downsamples with a stride-2 3x3 convolution. The decoder
/// upsamples with 2x2 stride-2 transposed convolutions and concatenates the
/// encoder output of the same level. Every level ends in residual units of
/// two conv-BN-PReLU stages with an identity or 1x1 shortcut.
class UNet {
 public:
  /// Builds the layers and registers their parameters in `store`.
  UNet(const UNetConfig& config, ParameterStore& store, Rng& rng);

  /// Logits [N, classes, H, W] for input [N, in_channels, H, W].
  Tensor forward(const Tensor& x, const ForwardContext& ctx, NetworkExtension* ext = nullptr);

  const UNetConfig& config() const { return config_; }
  const std::vector<ConvLayerInfo>& conv_layers() const { return conv_info_; }
  const std::vector<UnitSite>& unit_sites() const { return sites_; }
  Tensor conv_weight(std::size_t index) const { return convs_[index].weight; }
  /// All batchnorm running statistics, for re-estimation.
  std::vector<BatchNormStats> batchnorm_stats() const;

 private:
  struct Conv {
    std::size_t index = 0;
    Tensor weight;
    Tensor bias;
    std::size_t stride = 1;
    std::size_t pad = 0;
    bool transposed = false;
  };
  struct Stage {  // conv -> batchnorm -> PReLU
    std::size_t conv = 0;
    Tensor gamma, beta, alpha;
    BatchNormStats stats;
  };
  struct Unit {
    Stage a, b;
    std::size_t site = 0;
    bool has_shortcut = false;
    std::size_t shortcut = 0;
  };
  struct Level {
    bool has_resample = false;
    Stage resample;  // down (encoder) or up (decoder)
    std::vector<Unit> units;
  };

  std::size_t add_conv(ParameterStore& store, Rng& rng, const std::string& name, std::size_t cin, std::size_t cout,
                       std::size_t k, std::size_t stride, std::size_t pad, bool transposed);
  Stage add_stage(ParameterStore& store, Rng& rng, const std::string& name, std::size_t cin, std::size_t cout,
                  std::size_t k, std::size_t stride, std::size_t pad, bool transposed);
  Unit add_unit(ParameterStore& store, Rng& rng, const std::string& name, std::size_t cin, std::size_t cout);

  Tensor run_conv(std::size_t index, const Tensor& x, const ForwardContext& ctx, NetworkExtension* ext);
  Tensor run_stage(Stage& s, const Tensor& x, const ForwardContext& ctx, NetworkExtension* ext);
  Tensor run_unit(Unit& u, const Tensor& x, const ForwardContext& ctx, NetworkExtension* ext);

  UNetConfig config_;
  std::vector<Conv> convs_;
  std::vector<ConvLayerInfo> conv_info_;
  std::vector<UnitSite> sites_;
  std::vector<Level> encoder_;
  std::vector<Level> decoder_;  // decoder_[l] produces level l, l = levels-2 .. 0
  std::size_t head_ = 0;
  std::vector<BatchNormStats> all_stats_;
};

/// Plain inverted dropout on every element: x * mask / (1 - p).
Tensor dropout(const Tensor& x, double p, Rng& rng);

}  // namespace uqseg::model
