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
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "uqseg/data/dataset.hpp"
#include "uqseg/model/checkpoint.hpp"
#include "uqseg/model/segnet.hpp"
#include "uqseg/model/train.hpp"
#include "uqseg/uq/method.hpp"
#include "uqseg/uq/predictive.hpp"
#include "uqseg/uq/swag.hpp"

namespace uqseg::uq {

/// Rebuilds method extensions from SegNet::describe() output.
model::ExtensionFactory extension_factory();

/// The extension a method trains with; null for methods on the plain network.
std::unique_ptr<model::NetworkExtension> make_extension(const UQMethodSpec& spec);

/// Dropout rate the network is trained with (non-zero for MC dropout only).
double training_dropout(const UQMethodSpec& spec);

/// Plain base trainings, shared by methods that start from one: ensemble
/// members and the first phase of SWA, SWAG and Multi-SWAG. Entries are keyed
/// by network config, training config, data ids and seed.
class TrainCache {
 public:
  const model::TrainResult* find(const std::string& key) const;
  void put(const std::string& key, model::TrainResult result);
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, model::TrainResult> entries_;
};

/// Raised when one member of a multi-member method fails to train.
class MemberDiverged : public model::TrainingDiverged {
 public:
  MemberDiverged(std::size_t member, const std::string& what);
  std::size_t member() const { return member_; }

 private:
  std::size_t member_;
};

/// Everything a method needs at prediction time.
struct MethodArtifacts {
  UQMethodSpec spec;
  model::TrainConfig train_config;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> member_seeds;
  std::vector<model::Checkpoint> members;  // one per independently trained network
  std::vector<model::History> histories;   // every training run, in order
  std::vector<SwagStats> swag;             // per member, for SWA, SWAG and Multi-SWAG

  std::size_t train_epochs() const;
  double train_seconds() const;
  nlohmann::json manifest() const;

  /// Writes manifest.json, member_000.ckpt ..., swag_stats.bin and one
  /// vae_layer_<layer>.ckpt per LP-BNN layer VAE.
  void save(const std::filesystem::path& dir) const;
  static MethodArtifacts load(const std::filesystem::path& dir);
};

/// Throws std::invalid_argument unless the networks and SWAG statistics in
/// `a` are what its method predicts with.
void check_artifacts(const MethodArtifacts& a);

/// One base training per member with seeds base_seed + i.
std::vector<model::TrainResult> train_ensemble(const model::UNetConfig& config, const model::SplitDataset& data,
                                               const model::TrainConfig& tc, std::size_t members,
                                               std::uint64_t base_seed, TrainCache* cache = nullptr);

/// Trains every network `spec` needs. Seeds: member i uses seed + i for both
/// initialization and data order.
MethodArtifacts train_method(const UQMethodSpec& spec, const model::UNetConfig& config,
                             const model::SplitDataset& data, const model::TrainConfig& tc, std::uint64_t seed,
                             TrainCache* cache = nullptr);

/// Prepared prediction for one set of artifacts. Works on its own copies of
/// the networks, so the artifacts are never modified.
class Predictor {
 public:
  /// `bn_images` (normally the training images) are used to re-estimate
  /// batchnorm statistics for SWA and SWAG weight vectors and are required
  /// for those methods. SWAG weight samples are drawn here, from a stream
  /// fixed by the artifact seed.
  explicit Predictor(const MethodArtifacts& artifacts, const std::vector<data::LabeledImage>& bn_images = {},
                     std::size_t bn_batch = 4);

  /// Stochastic methods draw from `rng`; the others ignore it.
  PredictiveResult predict(const Tensor& image, Rng& rng);

  /// Forward passes per prediction.
  std::size_t passes() const;
  const UQMethodSpec& spec() const { return spec_; }
  /// Networks held for prediction; SWA and SWAG swap weights into net 0.
  std::size_t network_count() const { return nets_.size(); }
  model::SegNet& network(std::size_t i) { return *nets_.at(i); }

 private:
  UQMethodSpec spec_;
  std::vector<std::unique_ptr<model::SegNet>> nets_;
  std::vector<WeightVector> states_;  // full parameter vectors, batchnorm statistics included
  std::vector<std::size_t> state_net_;
};

/// One-shot prediction; builds a Predictor each call.
PredictiveResult predict(const MethodArtifacts& artifacts, const Tensor& image, Rng& rng,
                         const std::vector<data::LabeledImage>& bn_images = {});

}  // namespace uqseg::uq
