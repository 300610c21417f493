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

#include "uqseg/model/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "uqseg/core/json_keys.hpp"
#include "uqseg/data/dataset.hpp"
#include "uqseg/metrics/metrics.hpp"
#include "uqseg/model/loss.hpp"

namespace uqseg::model {
namespace {

constexpr std::uint64_t kTrainStream = 0x7a11;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (patience == 0) throw std::invalid_argument("patience must be at least 1");
  if (validation_metric != "dsc") throw std::invalid_argument("unknown validation metric " + validation_metric);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"optimizer", to_string(c.optimizer)},
                     {"momentum", c.momentum},           {"batch_size", c.batch_size},
                     {"patch_size", c.patch_size},       {"max_epochs", c.max_epochs},
                     {"patience", c.patience},           {"seed", c.seed},
                     {"validation_metric", c.validation_metric}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  check_keys(j,
             {"learning_rate", "optimizer", "momentum", "batch_size", "patch_size", "max_epochs", "patience", "seed",
              "validation_metric"},
             "training config");
  const TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.optimizer = parse_optimizer(j.value("optimizer", to_string(d.optimizer)));
  c.momentum = j.value("momentum", d.momentum);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.patch_size = j.value("patch_size", d.patch_size);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.patience = j.value("patience", d.patience);
  c.seed = j.value("seed", d.seed);
  c.validation_metric = j.value("validation_metric", d.validation_metric);
}

void to_json(nlohmann::json& j, const History& h) {
  j = nlohmann::json{{"best_epoch", h.best_epoch},
                     {"best_score", h.best_score},
                     {"early_stopped", h.early_stopped},
                     {"train_seconds", h.train_seconds},
                     {"epoch_seconds", h.epoch_seconds},
                     {"epochs", nlohmann::json::array()}};
  for (const auto& e : h.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_score", e.val_score}});
  }
}

void from_json(const nlohmann::json& j, History& h) {
  h.best_epoch = j.at("best_epoch");
  h.best_score = j.at("best_score");
  h.early_stopped = j.at("early_stopped");
  h.train_seconds = j.at("train_seconds");
  h.epoch_seconds = j.at("epoch_seconds").get<std::vector<double>>();
  h.epochs.clear();
  for (const auto& e : j.at("epochs")) h.epochs.push_back({e.at("epoch"), e.at("train_loss"), e.at("val_score")});
}

std::pair<Tensor, Tensor> stack_batch(const std::vector<const data::LabeledImage*>& items) {
  if (items.empty()) throw std::invalid_argument("empty batch");
  const Shape& s = items.front()->image.shape();
  std::vector<double> x, y;
  x.reserve(items.size() * numel(s));
  y.reserve(items.size() * s[1] * s[2]);
  for (const auto* it : items) {
    if (it->image.shape() != s) throw ShapeError("batch images differ in shape");
    x.insert(x.end(), it->image.data().begin(), it->image.data().end());
    y.insert(y.end(), it->labels.data().begin(), it->labels.data().end());
  }
  const std::size_t n = items.size();
  return {Tensor({n, s[0], s[1], s[2]}, std::move(x)), Tensor({n, s[1], s[2]}, std::move(y))};
}

double validation_dsc(SegNet& net, const std::vector<data::LabeledImage>& images) {
  if (images.empty()) throw std::invalid_argument("validation set is empty");
  double total = 0.0;
  for (const auto& im : images) {
    total += metrics::dsc_foreground(metrics::argmax_labels(net.predict_mean_probs(im.image)), im.labels);
  }
  return total / static_cast<double>(images.size());
}

TrainResult train(SegNet& net, const SplitDataset& data, const TrainConfig& tc, std::span<TrainingHook* const> hooks) {
  tc.validate();
  if (data.train.empty() || data.val.empty()) throw std::invalid_argument("training and validation sets must be non-empty");
  const auto& first = data.train.front().labels;
  if (tc.patch_size > 0 && (tc.patch_size > first.dim(0) || tc.patch_size > first.dim(1))) {
    throw std::invalid_argument("patch_size larger than the training images");
  }
  const bool use_patches = tc.patch_size > 0 && (tc.patch_size < first.dim(0) || tc.patch_size < first.dim(1));

  Rng rng(tc.seed, kTrainStream);
  auto optimizer = make_optimizer(tc.optimizer, net.network_parameters(), tc.learning_rate, tc.momentum);
  NetworkExtension* ext = net.extension();
  const std::size_t members = net.members();
  const std::size_t n = data.train.size();

  TrainResult result;
  History& history = result.history;
  std::size_t since_best = 0;
  const auto t_start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += tc.batch_size) {
      const std::size_t end = std::min(n, start + tc.batch_size);
      std::vector<data::LabeledImage> patches;
      std::vector<const data::LabeledImage*> items;
      for (std::size_t i = start; i < end; ++i) {
        const auto& im = data.train[order[i]];
        if (use_patches) {
          auto p = data::sample_patches(im.image, im.labels, tc.patch_size, rng, 1).front();
          patches.push_back({im.id, std::move(p.image), std::move(p.labels), im.tumor_ratio});
        } else {
          items.push_back(&im);
        }
      }
      for (const auto& p : patches) items.push_back(&p);
      auto [x, y] = stack_batch(items);

      ForwardContext ctx;
      ctx.training = true;
      ctx.stochastic = true;
      ctx.rng = &rng;
      ctx.dropout_p = net.dropout_p();
      if (members > 1) {
        for (std::size_t m = 0; m < members; ++m) ctx.members.insert(ctx.members.end(), x.dim(0), m);
        x = tile_rows(x, members);
        y = tile_rows(y, members);
      }

      Tensor loss = dice_ce_loss(net.forward(x, ctx), y);
      if (ext) {
        const Tensor extra = ext->extra_loss(n);
        if (extra.defined()) loss = add(loss, extra);
      }
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingDiverged("non-finite training loss (" + std::to_string(value) + ") at epoch " +
                               std::to_string(epoch) + ", batch starting at " + std::to_string(start));
      }
      net.params().zero_grad();
      loss.backward();
      optimizer->step();
      if (ext) ext->after_step(rng);
      loss_sum += value * static_cast<double>(end - start);
    }

    EpochState state{epoch, loss_sum / static_cast<double>(n), validation_dsc(net, data.val)};
    for (TrainingHook* h : hooks) h->on_epoch_end(state, net);
    history.epochs.push_back({epoch, state.train_loss, state.val_score});

    if (epoch == 0 || state.val_score > history.best_score) {
      history.best_epoch = epoch;
      history.best_score = state.val_score;
      result.best = Checkpoint::capture(net, rng.state(), epoch, state.val_score);
      since_best = 0;
    } else {
      ++since_best;
    }
    history.epoch_seconds.push_back(seconds_since(t_epoch));
    if (since_best >= tc.patience) {
      history.early_stopped = true;
      break;
    }
  }
  history.train_seconds = seconds_since(t_start);
  return result;
}

}  // namespace uqseg::model
