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
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "uqseg/core/rng.hpp"
#include "uqseg/model/segnet.hpp"

namespace uqseg::model {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network description, every named parameter and buffer, the training Rng
/// state, the epoch and its validation score.
///
/// File layout: "UQCK", u32 version, u64 header length, JSON header (model
/// description, blob directory, rng, epoch, score, extra), then the blob
/// payloads as little-endian doubles in directory order.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  struct Blob {
    std::string name;
    Shape shape;
    bool trainable = true;
    std::vector<double> values;
  };

  nlohmann::json model;
  std::vector<Blob> blobs;
  Rng::State rng;
  std::size_t epoch = 0;
  double best_score = 0.0;
  nlohmann::json extra = nlohmann::json::object();

  static Checkpoint capture(const SegNet& net, Rng::State rng = {}, std::size_t epoch = 0, double score = 0.0);
  /// Copies values into `net`. Names and shapes must match exactly.
  void restore_into(SegNet& net) const;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

/// Network rebuilt from the checkpoint description with its weights loaded.
std::unique_ptr<SegNet> load_segnet(const Checkpoint& ckpt, const ExtensionFactory& factory);

}  // namespace uqseg::model
