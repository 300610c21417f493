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
#include <deque>
#include <filesystem>
#include <vector>

#include "uqseg/core/rng.hpp"
#include "uqseg/model/checkpoint.hpp"
#include "uqseg/model/params.hpp"
#include "uqseg/model/train.hpp"
#include "uqseg/uq/method.hpp"

namespace uqseg::uq {

using model::WeightVector;

/// Running first and second moments of collected weight vectors plus the
/// deviations of the last `max_rank` snapshots from the running mean.
class SwagStats {
 public:
  SwagStats(std::size_t dim, std::size_t max_rank);

  void update(const WeightVector& w);

  std::size_t dim() const { return dim_; }
  std::size_t max_rank() const { return max_rank_; }
  std::size_t count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& second_moment() const { return second_; }
  const std::deque<std::vector<double>>& deviations() const { return deviations_; }

  /// The SWA solution. Throws std::logic_error before the first snapshot.
  WeightVector swa_mean() const;
  /// max(0, E[w^2] - E[w]^2) per entry.
  std::vector<double> diag_variance() const;

  /// Stored in the checkpoint container format.
  model::Checkpoint to_checkpoint() const;
  static SwagStats from_checkpoint(const model::Checkpoint& c);

 private:
  std::size_t dim_, max_rank_;
  std::size_t count_ = 0;
  std::vector<double> mean_, second_;
  std::deque<std::vector<double>> deviations_;
};

/// Gaussian with the SWA mean and covariance (diag + D D^T / (K - 1)) / 2.
class SwagPosterior {
 public:
  static constexpr double kVarianceFloor = 1e-30;

  /// Throws std::logic_error with fewer than two snapshots.
  static SwagPosterior fit(const SwagStats& stats);

  /// mean + scale * (sqrt(diag / 2) z1 + D z2 / sqrt(2 (K - 1))), z1 ~ N(0, I_d), z2 ~ N(0, I_K).
  WeightVector sample(double scale, Rng& rng) const;

  const WeightVector& mean() const { return mean_; }
  const std::vector<double>& diag_variance() const { return diag_; }
  std::size_t rank() const { return deviations_.size(); }
  /// Per-entry variance of unit-scale samples.
  std::vector<double> marginal_variance() const;
  /// Dense d x d covariance of unit-scale samples (row-major); for small d.
  std::vector<double> covariance() const;

 private:
  WeightVector mean_;
  std::vector<double> diag_;
  std::vector<std::vector<double>> deviations_;
};

/// Collects the trainable weights at the end of selected epochs.
class SwagCollector : public model::TrainingHook {
 public:
  SwagCollector(SwagStats& stats, std::size_t start_epoch, std::size_t interval);
  void on_epoch_end(model::EpochState& state, const model::SegNet& net) override;

 private:
  SwagStats& stats_;
  std::size_t start_, interval_;
};

struct SwagRun {
  SwagStats stats;
  model::History history;
};

/// Resumes `net` from `start` and trains it with SGD for `spec.collect_epochs`
/// epochs (no early stopping), collecting snapshots per the schedule.
SwagRun collect_swag(model::SegNet& net, const model::Checkpoint& start, const model::SplitDataset& data,
                     const model::TrainConfig& tc, const SwagSpec& spec);

}  // namespace uqseg::uq
