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

#include "uqseg/uq/swag.hpp"

#include <cmath>
#include <stdexcept>

namespace uqseg::uq {

SwagStats::SwagStats(std::size_t dim, std::size_t max_rank)
    : dim_(dim), max_rank_(max_rank), mean_(dim, 0.0), second_(dim, 0.0) {
  if (max_rank < 2) throw std::invalid_argument("SWAG max_rank must be at least 2");
}

void SwagStats::update(const WeightVector& w) {
  if (w.size() != dim_) {
    throw std::invalid_argument("SWAG snapshot has " + std::to_string(w.size()) + " entries, expected " +
                                std::to_string(dim_));
  }
  ++count_;
  const double n = static_cast<double>(count_);
  std::vector<double> dev(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    mean_[i] += (w[i] - mean_[i]) / n;
    second_[i] += (w[i] * w[i] - second_[i]) / n;
    dev[i] = w[i] - mean_[i];
  }
  deviations_.push_back(std::move(dev));
  if (deviations_.size() > max_rank_) deviations_.pop_front();
}

WeightVector SwagStats::swa_mean() const {
  if (count_ == 0) throw std::logic_error("swa_mean before any snapshot");
  return mean_;
}

std::vector<double> SwagStats::diag_variance() const {
  std::vector<double> v(dim_);
  for (std::size_t i = 0; i < dim_; ++i) v[i] = std::max(0.0, second_[i] - mean_[i] * mean_[i]);
  return v;
}

model::Checkpoint SwagStats::to_checkpoint() const {
  model::Checkpoint c;
  c.model = {{"kind", "swag_stats"}, {"dim", dim_}, {"max_rank", max_rank_}, {"count", count_}};
  c.blobs.push_back({"mean", {dim_}, false, mean_});
  c.blobs.push_back({"second_moment", {dim_}, false, second_});
  for (std::size_t k = 0; k < deviations_.size(); ++k) {
    c.blobs.push_back({"deviation_" + std::to_string(k), {dim_}, false, deviations_[k]});
  }
  return c;
}

SwagStats SwagStats::from_checkpoint(const model::Checkpoint& c) {
  if (c.model.value("kind", "") != "swag_stats") throw model::CheckpointError("not a SWAG statistics file");
  SwagStats s(c.model.at("dim").get<std::size_t>(), c.model.at("max_rank").get<std::size_t>());
  s.count_ = c.model.at("count").get<std::size_t>();
  if (c.blobs.size() < 2 || c.blobs.size() - 2 > s.max_rank_) throw model::CheckpointError("bad SWAG statistics layout");
  for (const auto& b : c.blobs) {
    if (b.values.size() != s.dim_) throw model::CheckpointError("SWAG blob " + b.name + " has the wrong length");
  }
  s.mean_ = c.blobs[0].values;
  s.second_ = c.blobs[1].values;
  for (std::size_t k = 2; k < c.blobs.size(); ++k) s.deviations_.push_back(c.blobs[k].values);
  return s;
}

SwagPosterior SwagPosterior::fit(const SwagStats& stats) {
  if (stats.count() < 2) throw std::logic_error("SWAG needs at least two snapshots, have " + std::to_string(stats.count()));
  SwagPosterior p;
  p.mean_ = stats.mean();
  p.diag_ = stats.diag_variance();
  for (auto& v : p.diag_) v = std::max(v, kVarianceFloor);
  p.deviations_.assign(stats.deviations().begin(), stats.deviations().end());
  return p;
}

WeightVector SwagPosterior::sample(double scale, Rng& rng) const {
  const std::size_t d = mean_.size(), k = deviations_.size();
  const double low_rank = 1.0 / std::sqrt(2.0 * static_cast<double>(k - 1));
  WeightVector noise(d);
  for (std::size_t i = 0; i < d; ++i) noise[i] = std::sqrt(diag_[i] * 0.5) * rng.normal();
  for (std::size_t c = 0; c < k; ++c) {
    const double z = rng.normal() * low_rank;
    const auto& col = deviations_[c];
    for (std::size_t i = 0; i < d; ++i) noise[i] += col[i] * z;
  }
  WeightVector w(d);
  for (std::size_t i = 0; i < d; ++i) w[i] = mean_[i] + scale * noise[i];
  return w;
}

std::vector<double> SwagPosterior::marginal_variance() const {
  const double k1 = static_cast<double>(deviations_.size() - 1);
  std::vector<double> v(mean_.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double dd = 0.0;
    for (const auto& col : deviations_) dd += col[i] * col[i];
    v[i] = 0.5 * (diag_[i] + dd / k1);
  }
  return v;
}

std::vector<double> SwagPosterior::covariance() const {
  const std::size_t d = mean_.size();
  const double k1 = static_cast<double>(deviations_.size() - 1);
  std::vector<double> c(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double dd = 0.0;
      for (const auto& col : deviations_) dd += col[i] * col[j];
      c[i * d + j] = 0.5 * ((i == j ? diag_[i] : 0.0) + dd / k1);
    }
  }
  return c;
}

SwagCollector::SwagCollector(SwagStats& stats, std::size_t start_epoch, std::size_t interval)
    : stats_(stats), start_(start_epoch), interval_(interval) {
  if (interval < 1) throw std::invalid_argument("SWAG interval must be at least 1");
}

void SwagCollector::on_epoch_end(model::EpochState& state, const model::SegNet& net) {
  if (state.epoch < start_ || (state.epoch - start_) % interval_ != 0) return;
  stats_.update(net.params().flatten(true));
}

SwagRun collect_swag(model::SegNet& net, const model::Checkpoint& start, const model::SplitDataset& data,
                     const model::TrainConfig& tc, const SwagSpec& spec) {
  start.restore_into(net);
  model::TrainConfig sgd = tc;
  sgd.optimizer = model::OptimizerKind::sgd;
  sgd.learning_rate = spec.learning_rate;
  sgd.momentum = spec.momentum;
  sgd.max_epochs = spec.collect_epochs;
  sgd.patience = spec.collect_epochs;
  sgd.seed = mix64(tc.seed ^ 0x5a6a);  // fresh shuffling order for the second phase
  SwagRun run{SwagStats(net.params().flatten(true).size(), spec.max_rank), {}};
  SwagCollector collector(run.stats, spec.start_epoch, spec.interval);
  model::TrainingHook* hooks[] = {&collector};
  run.history = model::train(net, data, sgd, hooks).history;
  return run;
}

}  // namespace uqseg::uq
