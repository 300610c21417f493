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

#include "uqseg/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace uqseg::model {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

template <class T>
void append(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

Checkpoint Checkpoint::capture(const SegNet& net, Rng::State rng, std::size_t epoch, double score) {
  Checkpoint c;
  c.model = net.describe();
  for (const auto& e : net.params().entries()) {
    c.blobs.push_back({e.name, e.tensor.shape(), e.trainable, e.tensor.values()});
  }
  c.rng = rng;
  c.epoch = epoch;
  c.best_score = score;
  return c;
}

void Checkpoint::restore_into(SegNet& net) const {
  const auto& entries = net.params().entries();
  if (entries.size() != blobs.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(blobs.size()) + " tensors, network has " +
                          std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    if (entries[i].name != blobs[i].name || entries[i].tensor.shape() != blobs[i].shape) {
      throw CheckpointError("checkpoint tensor " + blobs[i].name + " " + to_string(blobs[i].shape) +
                            " does not match network tensor " + entries[i].name + " " +
                            to_string(entries[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    Tensor t = entries[i].tensor;
    auto d = t.mutable_data();
    std::copy(blobs[i].values.begin(), blobs[i].values.end(), d.begin());
  }
}

std::string Checkpoint::serialize() const {
  nlohmann::json header{{"model", model},
                        {"rng", {{"seed", rng.seed}, {"stream", rng.stream}, {"counter", rng.counter}}},
                        {"epoch", epoch},
                        {"best_score", best_score},
                        {"extra", extra},
                        {"blobs", nlohmann::json::array()}};
  for (const auto& b : blobs) header["blobs"].push_back({{"name", b.name}, {"shape", b.shape}, {"trainable", b.trainable}});
  const std::string text = header.dump();

  std::string out = "UQCK";
  append(out, kVersion);
  append(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  for (const auto& b : blobs) {
    out.append(reinterpret_cast<const char*>(b.values.data()), b.values.size() * sizeof(double));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "UQCK") != 0) throw CheckpointError("not a checkpoint (bad magic)");
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto len = take<std::uint64_t>(bytes, pos);
  if (pos + len > bytes.size()) throw CheckpointError("truncated checkpoint header");
  const auto header = nlohmann::json::parse(bytes.substr(pos, len));
  pos += len;

  Checkpoint c;
  c.model = header.at("model");
  c.rng = {header["rng"].at("seed").get<std::uint64_t>(), header["rng"].at("stream").get<std::uint64_t>(),
           header["rng"].at("counter").get<std::uint64_t>()};
  c.epoch = header.at("epoch").get<std::size_t>();
  c.best_score = header.at("best_score").get<double>();
  c.extra = header.at("extra");
  for (const auto& b : header.at("blobs")) {
    Blob blob{b.at("name").get<std::string>(), b.at("shape").get<Shape>(), b.at("trainable").get<bool>(), {}};
    const std::size_t n = numel(blob.shape);
    if (pos + n * sizeof(double) > bytes.size()) throw CheckpointError("truncated checkpoint payload at " + blob.name);
    blob.values.resize(n);
    std::memcpy(blob.values.data(), bytes.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    c.blobs.push_back(std::move(blob));
  }
  if (pos != bytes.size()) throw CheckpointError("trailing bytes after checkpoint payload");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw CheckpointError("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str());
}

std::unique_ptr<SegNet> load_segnet(const Checkpoint& ckpt, const ExtensionFactory& factory) {
  auto net = build_segnet(ckpt.model, factory);
  ckpt.restore_into(*net);
  return net;
}

}  // namespace uqseg::model
