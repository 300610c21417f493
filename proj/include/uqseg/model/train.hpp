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
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "uqseg/data/dataset.hpp"
#include "uqseg/model/checkpoint.hpp"
#include "uqseg/model/optimizer.hpp"
#include "uqseg/model/segnet.hpp"

namespace uqseg::model {

struct SplitDataset {
  std::vector<data::LabeledImage> train;
  std::vector<data::LabeledImage> val;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double momentum = 0.9;  // SGD only
  std::size_t batch_size = 4;
  std::size_t patch_size = 0;  // 0 trains on full images
  std::size_t max_epochs = 200;
  std::size_t patience = 100;
  std::uint64_t seed = 0;
  std::string validation_metric = "dsc";

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_score = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

/// Per-epoch losses and validation scores. Wall-clock times are kept apart
/// so that two runs can be compared for equality.
struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
  bool early_stopped = false;
  std::vector<double> epoch_seconds;
  double train_seconds = 0.0;

  bool same_trajectory(const History& other) const {
    return epochs == other.epochs && best_epoch == other.best_epoch && best_score == other.best_score &&
           early_stopped == other.early_stopped;
  }
};

void to_json(nlohmann::json& j, const History& h);
void from_json(const nlohmann::json& j, History& h);

/// What a hook sees at the end of an epoch. `val_score` may be overwritten;
/// early stopping uses the value left after all hooks ran.
struct EpochState {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_score = 0.0;
};

class TrainingHook {
 public:
  virtual ~TrainingHook() = default;
  virtual void on_epoch_end(EpochState& state, const SegNet& net) = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Checkpoint best;
  History history;
};

/// Mean foreground DSC of deterministic predictions over `images`.
double validation_dsc(SegNet& net, const std::vector<data::LabeledImage>& images);

/// Trains until the validation score has not improved for `patience` epochs
/// or `max_epochs` is reached. Each epoch shuffles the training images, cuts
/// one random patch per image when a patch size is set, and steps once per
/// batch. Multi-member networks see every batch tiled once per member. The
/// returned checkpoint holds the earliest epoch with the best score; the
/// network itself is left at the final epoch.
TrainResult train(SegNet& net, const SplitDataset& data, const TrainConfig& tc,
                  std::span<TrainingHook* const> hooks = {});

/// Images stacked into a batch [N, C, H, W] and labels [N, H, W].
std::pair<Tensor, Tensor> stack_batch(const std::vector<const data::LabeledImage*>& items);

}  // namespace uqseg::model
