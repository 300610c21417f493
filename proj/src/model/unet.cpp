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

#include "uqseg/model/unet.hpp"

#include <cmath>
#include <stdexcept>

#include "uqseg/core/json_keys.hpp"

namespace uqseg::model {
namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

void UNetConfig::validate() const {
  if (in_channels == 0) throw std::invalid_argument("in_channels must be positive");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be at least 2");
  if (encoder_channels.empty()) throw std::invalid_argument("encoder_channels must not be empty");
  for (auto c : encoder_channels) {
    if (c == 0) throw std::invalid_argument("encoder_channels must be positive");
  }
  if (residual_units_per_level == 0) throw std::invalid_argument("residual_units_per_level must be positive");
}

void to_json(nlohmann::json& j, const UNetConfig& c) {
  j = nlohmann::json{{"in_channels", c.in_channels},
                     {"num_classes", c.num_classes},
                     {"encoder_channels", c.encoder_channels},
                     {"residual_units_per_level", c.residual_units_per_level},
                     {"prelu_init", c.prelu_init}};
}

void from_json(const nlohmann::json& j, UNetConfig& c) {
  check_keys(j, {"in_channels", "num_classes", "encoder_channels", "residual_units_per_level", "prelu_init"},
             "network config");
  const UNetConfig d;
  c.in_channels = j.value("in_channels", d.in_channels);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.encoder_channels = j.value("encoder_channels", d.encoder_channels);
  c.residual_units_per_level = j.value("residual_units_per_level", d.residual_units_per_level);
  c.prelu_init = j.value("prelu_init", d.prelu_init);
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout probability must be in [0, 1)");
  if (p == 0.0) return x;
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

UNet::UNet(const UNetConfig& config, ParameterStore& store, Rng& rng) : config_(config) {
  config_.validate();
  const auto& ch = config_.encoder_channels;
  const std::size_t levels = ch.size();
  const std::size_t units = config_.residual_units_per_level;

  for (std::size_t l = 0; l < levels; ++l) {
    Level level;
    const std::string name = "enc" + std::to_string(l);
    std::size_t cin = l == 0 ? config_.in_channels : ch[l - 1];
    if (l > 0) {
      level.has_resample = true;
      level.resample = add_stage(store, rng, name + ".down", cin, ch[l], 3, 2, 1, false);
      cin = ch[l];
    }
    for (std::size_t u = 0; u < units; ++u) {
      level.units.push_back(add_unit(store, rng, name + ".unit" + std::to_string(u), u == 0 ? cin : ch[l], ch[l]));
    }
    encoder_.push_back(std::move(level));
  }

  decoder_.resize(levels > 0 ? levels - 1 : 0);
  for (std::size_t i = levels - 1; i-- > 0;) {
    Level level;
    const std::string name = "dec" + std::to_string(i);
    level.has_resample = true;
    level.resample = add_stage(store, rng, name + ".up", ch[i + 1], ch[i], 2, 2, 0, true);
    for (std::size_t u = 0; u < units; ++u) {
      level.units.push_back(add_unit(store, rng, name + ".unit" + std::to_string(u), u == 0 ? 2 * ch[i] : ch[i], ch[i]));
    }
    decoder_[i] = std::move(level);
  }

  head_ = add_conv(store, rng, "head", ch[0], config_.num_classes, 1, 1, 0, false);
}

std::size_t UNet::add_conv(ParameterStore& store, Rng& rng, const std::string& name, std::size_t cin,
                           std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad, bool transposed) {
  // Kaiming-uniform on fan-in with the PReLU gain. For a transposed
  // convolution each output sees cin * (k / stride)^2 inputs.
  const double fan_in = transposed ? static_cast<double>(cin * k * k) / static_cast<double>(stride * stride)
                                   : static_cast<double>(cin * k * k);
  const double a = config_.prelu_init;
  const double bound = std::sqrt(6.0 / ((1.0 + a * a) * fan_in));
  Conv c;
  c.index = convs_.size();
  c.stride = stride;
  c.pad = pad;
  c.transposed = transposed;
  const Shape shape = transposed ? Shape{cin, cout, k, k} : Shape{cout, cin, k, k};
  c.weight = store.add(name + ".weight", uniform_tensor(shape, bound, rng));
  c.bias = store.add(name + ".bias", Tensor({cout}, 0.0));
  convs_.push_back(c);
  conv_info_.push_back({name, cin, cout, k, stride, transposed});
  return c.index;
}

UNet::Stage UNet::add_stage(ParameterStore& store, Rng& rng, const std::string& name, std::size_t cin,
                            std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad, bool transposed) {
  Stage s;
  s.conv = add_conv(store, rng, name + ".conv", cin, cout, k, stride, pad, transposed);
  s.gamma = store.add(name + ".bn.gamma", Tensor({cout}, 1.0));
  s.beta = store.add(name + ".bn.beta", Tensor({cout}, 0.0));
  s.stats.running_mean = store.add(name + ".bn.running_mean", Tensor({cout}, 0.0), false);
  s.stats.running_var = store.add(name + ".bn.running_var", Tensor({cout}, 1.0), false);
  s.alpha = store.add(name + ".act.alpha", Tensor({cout}, config_.prelu_init));
  all_stats_.push_back(s.stats);
  return s;
}

UNet::Unit UNet::add_unit(ParameterStore& store, Rng& rng, const std::string& name, std::size_t cin,
                          std::size_t cout) {
  Unit u;
  u.a = add_stage(store, rng, name + ".a", cin, cout, 3, 1, 1, false);
  u.b = add_stage(store, rng, name + ".b", cout, cout, 3, 1, 1, false);
  u.site = sites_.size();
  sites_.push_back({name, u.b.conv, cout});
  if (cin != cout) {
    u.has_shortcut = true;
    u.shortcut = add_conv(store, rng, name + ".shortcut", cin, cout, 1, 1, 0, false);
  }
  return u;
}

std::vector<BatchNormStats> UNet::batchnorm_stats() const { return all_stats_; }

Tensor UNet::run_conv(std::size_t index, const Tensor& x, const ForwardContext& ctx, NetworkExtension* ext) {
  const Conv& c = convs_[index];
  const FastWeights fw = ext ? ext->fast_weights(index, x.dim(0), ctx) : FastWeights{};
  if (!fw.r.defined() && !fw.s.defined()) {
    return c.transposed ? conv_transpose2d(x, c.weight, c.bias, c.stride, c.pad)
                        : conv2d(x, c.weight, c.bias, c.stride, c.pad);
  }
  // Scaling input channels by s and output channels by r is the rank-1
  // weight W * (r s^T), applied per batch row.
  const Tensor in = fw.s.defined() ? scale_channels(x, fw.s) : x;
  Tensor y = c.transposed ? conv_transpose2d(in, c.weight, Tensor(), c.stride, c.pad)
                          : conv2d(in, c.weight, Tensor(), c.stride, c.pad);
  if (fw.r.defined()) y = scale_channels(y, fw.r);
  return add_channels(y, c.bias);
}

Tensor UNet::run_stage(Stage& s, const Tensor& x, const ForwardContext& ctx, NetworkExtension* ext) {
  const Tensor y = run_conv(s.conv, x, ctx, ext);
  return prelu(batchnorm(y, s.gamma, s.beta, s.stats, ctx.training, kBatchNormEpsilon, ctx.bn_momentum), s.alpha);
}

Tensor UNet::run_unit(Unit& u, const Tensor& x, const ForwardContext& ctx, NetworkExtension* ext) {
  Tensor h = run_stage(u.b, run_stage(u.a, x, ctx, ext), ctx, ext);
  if (ctx.stochastic && ctx.dropout_p > 0.0) {
    if (!ctx.rng) throw std::invalid_argument("stochastic forward needs an Rng");
    h = dropout(h, ctx.dropout_p, *ctx.rng);
  }
  if (ext) h = ext->unit_output(u.site, h, ctx);
  const Tensor shortcut = u.has_shortcut ? run_conv(u.shortcut, x, ctx, ext) : x;
  return add(h, shortcut);
}

Tensor UNet::forward(const Tensor& x, const ForwardContext& ctx, NetworkExtension* ext) {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels) {
    throw ShapeError("UNet expects [N," + std::to_string(config_.in_channels) + ",H,W], got " + to_string(x.shape()));
  }
  const std::size_t factor = std::size_t{1} << (config_.levels() - 1);
  if (x.dim(2) % factor != 0 || x.dim(3) % factor != 0) {
    throw ShapeError("UNet input size " + to_string(x.shape()) + " is not divisible by " + std::to_string(factor));
  }
  if (!ctx.members.empty() && ctx.members.size() != x.dim(0)) {
    throw std::invalid_argument("member assignment does not match the batch size");
  }

  std::vector<Tensor> skips;
  Tensor h = x;
  for (auto& level : encoder_) {
    if (level.has_resample) h = run_stage(level.resample, h, ctx, ext);
    for (auto& u : level.units) h = run_unit(u, h, ctx, ext);
    skips.push_back(h);
  }
  for (std::size_t i = decoder_.size(); i-- > 0;) {
    auto& level = decoder_[i];
    h = concat_channels(run_stage(level.resample, h, ctx, ext), skips[i]);
    for (auto& u : level.units) h = run_unit(u, h, ctx, ext);
  }
  return run_conv(head_, h, ctx, ext);
}

}  // namespace uqseg::model
