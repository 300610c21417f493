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

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "uqseg/uq/aggregate.hpp"

namespace uqseg::uq {

enum class MethodTag {
  base,
  mc_dropout,
  concrete_dropout,
  ensemble,
  batch_ensemble,
  rank1_bnn,
  lp_bnn,
  swa,
  swag,
  multi_swag,
};

MethodTag parse_method_tag(const std::string& tag);
std::string to_string(MethodTag tag);
const std::vector<MethodTag>& all_method_tags();
/// Tags whose predictions come from M members.
bool is_ensemble_family(MethodTag tag);

struct ConcreteSpec {
  double temperature = 0.1;
  double lengthscale = 1e-2;
  double init_p = 0.1;
};

struct Rank1Spec {
  double prior_mean = 1.0;
  double prior_std = 0.1;
};

struct LpbnnSpec {
  std::size_t latent_dim = 8;
  std::size_t hidden = 32;
  double kl_weight = 1.0;
  double learning_rate = 1e-3;  // VAE optimizer
};

/// SWA and SWAG continue from the best checkpoint of an ordinary training
/// run with SGD and collect one snapshot every `interval` epochs.
struct SwagSpec {
  std::size_t start_epoch = 0;  // first collected epoch of the SGD phase
  std::size_t interval = 1;
  std::size_t collect_epochs = 10;
  std::size_t max_rank = 10;
  double scale = 0.5;
  double learning_rate = 1e-2;
  double momentum = 0.9;
};

struct UQMethodSpec {
  MethodTag tag = MethodTag::base;
  std::size_t num_samples = 4;
  std::size_t num_members = 4;
  double dropout_p = 0.1;
  ConcreteSpec concrete;
  Rank1Spec rank1;
  LpbnnSpec lpbnn;
  SwagSpec swag;
  UncertaintyMode uncertainty = UncertaintyMode::std_dev;

  void validate() const;
  /// Short label used in reports, e.g. "concrete_dropout".
  std::string name() const { return to_string(tag); }
};

void to_json(nlohmann::json& j, const UQMethodSpec& s);
void from_json(const nlohmann::json& j, UQMethodSpec& s);

}  // namespace uqseg::uq
