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

#include "json.hpp"
#include "uqseg/data/dataset.hpp"
#include "uqseg/model/segnet.hpp"
#include "uqseg/uq/methods.hpp"

namespace uqseg::bench {

/// Time and memory cost of one trained method.
struct ScalabilityRow {
  std::string method;
  std::size_t train_epochs = 0;         // summed over every training run of the method
  double train_seconds = 0.0;           // summed likewise
  double inference_seconds = 0.0;       // one sample; median of the timed repetitions
  std::size_t total_params = 0;
  double params_size_mb = 0.0;          // total_params * bytes_per_param / 1e6
  double pass_size_mb = 0.0;            // one forward/backward at batch 1
  double train_epochs_per_member = 0.0;
};

void to_json(nlohmann::json& j, const ScalabilityRow& r);
void from_json(const nlohmann::json& j, ScalabilityRow& r);

struct ProfileOptions {
  std::size_t repeats = 5;  // timed predictions after one warm-up
  std::size_t bytes_per_param = sizeof(double);
};

/// Numbers the method stores for prediction. Networks count their trainable
/// parameters (extension parameters included, batchnorm statistics not).
/// SWAG counts its posterior instead of the network: mean, diagonal and the
/// K deviation columns, (2 + K) d per member.
std::size_t count_parameters(const uq::MethodArtifacts& artifacts);

/// Bytes held by one training-mode forward/backward of `image` at batch 1:
/// every intermediate value kept in the graph plus one gradient buffer per
/// graph value that requires a gradient (parameters included). Multi-member
/// networks tile the image once per member, as in training.
std::size_t pass_bytes(model::SegNet& net, const Tensor& image, double dropout_p = 0.0);

/// Profiles `artifacts` on `image`. One sample is the cheapest prediction the
/// method allows: a single stochastic pass for sampled methods (one per
/// member for Multi-SWAG) and the full set of members for ensembles.
ScalabilityRow profile(const uq::MethodArtifacts& artifacts, const Tensor& image,
                       const std::vector<data::LabeledImage>& bn_images, const ProfileOptions& options = {});

}  // namespace uqseg::bench
