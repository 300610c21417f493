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

#include "uqseg/uq/methods.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "uqseg/uq/concrete.hpp"
#include "uqseg/uq/lpbnn.hpp"
#include "uqseg/uq/rank1.hpp"

namespace uqseg::uq {
namespace {

using nlohmann::json;

constexpr const char* kManifest = "manifest.json";
constexpr const char* kSwagFile = "swag_stats.bin";
constexpr const char* kVaeTag = ".vae.";

std::string member_file(std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return "member_" + digits + ".ckpt";
}

std::string cache_key(const model::UNetConfig& config, const model::SplitDataset& data, const model::TrainConfig& tc) {
  json ids = json::array();
  for (const auto* set : {&data.train, &data.val}) {
    json part = json::array();
    for (const auto& im : *set) part.push_back(im.id);
    ids.push_back(std::move(part));
  }
  return json{{"unet", config}, {"train", tc}, {"data", ids}}.dump();
}

model::TrainResult train_base(const model::UNetConfig& config, const model::SplitDataset& data,
                              const model::TrainConfig& tc, std::uint64_t seed, TrainCache* cache) {
  model::TrainConfig t = tc;
  t.seed = seed;
  const std::string key = cache_key(config, data, t);
  if (cache) {
    if (const auto* hit = cache->find(key)) return *hit;
  }
  model::SegNet net(config, seed);
  auto result = model::train(net, data, t);
  if (cache) cache->put(key, result);
  return result;
}

model::TrainResult train_network(const UQMethodSpec& spec, const model::UNetConfig& config,
                                 const model::SplitDataset& data, const model::TrainConfig& tc, std::uint64_t seed) {
  model::SegNet net(config, seed, training_dropout(spec), make_extension(spec));
  model::TrainConfig t = tc;
  t.seed = seed;
  return model::train(net, data, t);
}

/// Layer name of an LP-BNN VAE parameter, e.g. "enc0.unit0.a.conv".
std::string vae_layer(const std::string& blob) {
  const std::string head = "lp_bnn.";
  const auto end = blob.find(kVaeTag);
  return blob.substr(head.size(), end - head.size());
}

}  // namespace

void check_artifacts(const MethodArtifacts& a) {
  const auto& s = a.spec;
  const std::size_t n = a.members.size();
  const auto fail = [&](const std::string& why) {
    throw std::invalid_argument("artifacts do not fit method " + s.name() + ": " + why);
  };
  if (n == 0) fail("no trained networks");
  switch (s.tag) {
    case MethodTag::ensemble:
    case MethodTag::multi_swag:
      if (n != s.num_members) fail(std::to_string(n) + " networks for " + std::to_string(s.num_members) + " members");
      break;
    default:
      if (n != 1) fail(std::to_string(n) + " networks, expected 1");
  }
  const bool swag_family = s.tag == MethodTag::swa || s.tag == MethodTag::swag || s.tag == MethodTag::multi_swag;
  if (swag_family != !a.swag.empty()) fail("SWAG statistics present iff the method collects them");
  if (swag_family && a.swag.size() != n) fail("one set of SWAG statistics per network required");
  const json ext = a.members.front().model.at("extension");
  const std::string want = [&]() -> std::string {
    switch (s.tag) {
      case MethodTag::concrete_dropout:
      case MethodTag::batch_ensemble:
      case MethodTag::rank1_bnn:
      case MethodTag::lp_bnn:
        return s.name();
      default:
        return "";
    }
  }();
  const std::string have = ext.is_null() ? "" : ext.at("tag").get<std::string>();
  if (want != have) fail("network extension '" + have + "'");
}

model::ExtensionFactory extension_factory() {
  return [](const json& j) -> std::unique_ptr<model::NetworkExtension> {
    const std::string tag = j.at("tag").get<std::string>();
    const json& c = j.at("config");
    if (tag == "concrete_dropout") {
      return std::make_unique<ConcreteDropout>(ConcreteSpec{c.at("temperature").get<double>(),
                                                            c.at("lengthscale").get<double>(), c.at("init_p").get<double>()});
    }
    if (tag == "batch_ensemble") {
      return std::make_unique<BatchEnsemble>(c.at("members").get<std::size_t>(), c.at("init_std").get<double>());
    }
    if (tag == "rank1_bnn") {
      return std::make_unique<Rank1Bnn>(c.at("members").get<std::size_t>(),
                                        Rank1Spec{c.at("prior_mean").get<double>(), c.at("prior_std").get<double>()});
    }
    if (tag == "lp_bnn") {
      LpbnnSpec spec{c.at("latent_dim").get<std::size_t>(), c.at("hidden").get<std::size_t>(),
                     c.at("kl_weight").get<double>(), c.at("learning_rate").get<double>()};
      return std::make_unique<LpBnn>(c.at("members").get<std::size_t>(), spec, c.at("init_std").get<double>());
    }
    throw std::invalid_argument("unknown network extension '" + tag + "'");
  };
}

std::unique_ptr<model::NetworkExtension> make_extension(const UQMethodSpec& spec) {
  switch (spec.tag) {
    case MethodTag::concrete_dropout:
      return std::make_unique<ConcreteDropout>(spec.concrete);
    case MethodTag::batch_ensemble:
      return std::make_unique<BatchEnsemble>(spec.num_members);
    case MethodTag::rank1_bnn:
      return std::make_unique<Rank1Bnn>(spec.num_members, spec.rank1);
    case MethodTag::lp_bnn:
      return std::make_unique<LpBnn>(spec.num_members, spec.lpbnn);
    default:
      return nullptr;
  }
}

double training_dropout(const UQMethodSpec& spec) { return spec.tag == MethodTag::mc_dropout ? spec.dropout_p : 0.0; }

const model::TrainResult* TrainCache::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void TrainCache::put(const std::string& key, model::TrainResult result) { entries_.insert_or_assign(key, std::move(result)); }

MemberDiverged::MemberDiverged(std::size_t member, const std::string& what)
    : model::TrainingDiverged("member " + std::to_string(member) + ": " + what), member_(member) {}

std::size_t MethodArtifacts::train_epochs() const {
  std::size_t n = 0;
  for (const auto& h : histories) n += h.epochs.size();
  return n;
}

double MethodArtifacts::train_seconds() const {
  double s = 0.0;
  for (const auto& h : histories) s += h.train_seconds;
  return s;
}

json MethodArtifacts::manifest() const {
  json j{{"spec", spec},
         {"train_config", train_config},
         {"seed", seed},
         {"member_seeds", member_seeds},
         {"members", members.size()},
         {"swag_members", swag.size()},
         {"train_epochs", train_epochs()},
         {"train_seconds", train_seconds()},
         {"histories", histories}};
  return j;
}

void MethodArtifacts::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < members.size(); ++i) {
    model::Checkpoint c = members[i];
    std::map<std::string, model::Checkpoint> vaes;
    std::vector<model::Checkpoint::Blob> kept;
    for (auto& b : c.blobs) {
      if (b.name.find(kVaeTag) == std::string::npos) {
        kept.push_back(std::move(b));
        continue;
      }
      auto& v = vaes[vae_layer(b.name)];
      v.model = {{"kind", "vae_layer"}, {"layer", vae_layer(b.name)}, {"member", i}};
      v.blobs.push_back(std::move(b));
    }
    c.blobs = std::move(kept);
    if (!vaes.empty()) {
      c.extra["vae_layers"] = json::array();
      for (const auto& [layer, v] : vaes) {
        const std::string file = "vae_layer_" + layer + (members.size() > 1 ? "_" + std::to_string(i) : "") + ".ckpt";
        v.save(dir / file);
        c.extra["vae_layers"].push_back(file);
      }
    }
    c.save(dir / member_file(i));
  }
  if (!swag.empty()) {
    model::Checkpoint set;
    set.model = {{"kind", "swag_stats_set"}, {"members", json::array()}};
    for (std::size_t m = 0; m < swag.size(); ++m) {
      const auto c = swag[m].to_checkpoint();
      set.model["members"].push_back(c.model);
      for (auto b : c.blobs) {
        b.name = "m" + std::to_string(m) + "." + b.name;
        set.blobs.push_back(std::move(b));
      }
    }
    set.save(dir / kSwagFile);
  }
  const auto tmp = dir / (std::string(kManifest) + ".tmp");
  std::ofstream(tmp) << manifest().dump(2) << '\n';
  std::filesystem::rename(tmp, dir / kManifest);
}

MethodArtifacts MethodArtifacts::load(const std::filesystem::path& dir) {
  std::ifstream is(dir / kManifest);
  if (!is) throw std::runtime_error("no manifest in " + dir.string());
  const json j = json::parse(is);
  MethodArtifacts a;
  a.spec = j.at("spec").get<UQMethodSpec>();
  a.train_config = j.at("train_config").get<model::TrainConfig>();
  a.seed = j.at("seed").get<std::uint64_t>();
  a.member_seeds = j.at("member_seeds").get<std::vector<std::uint64_t>>();
  a.histories = j.at("histories").get<std::vector<model::History>>();
  const auto n = j.at("members").get<std::size_t>();
  const auto factory = extension_factory();
  for (std::size_t i = 0; i < n; ++i) {
    auto c = model::Checkpoint::load(dir / member_file(i));
    if (c.extra.contains("vae_layers")) {
      for (const auto& file : c.extra.at("vae_layers")) {
        auto v = model::Checkpoint::load(dir / file.get<std::string>());
        for (auto& b : v.blobs) c.blobs.push_back(std::move(b));
      }
      c.extra.erase("vae_layers");
      // restore the network's parameter order
      const auto net = model::build_segnet(c.model, factory);
      std::unordered_map<std::string, std::size_t> rank;
      for (const auto& e : net->params().entries()) rank.emplace(e.name, rank.size());
      for (const auto& b : c.blobs) {
        if (!rank.count(b.name)) throw model::CheckpointError("unexpected tensor " + b.name + " in " + dir.string());
      }
      std::sort(c.blobs.begin(), c.blobs.end(), [&](const auto& x, const auto& y) { return rank[x.name] < rank[y.name]; });
    }
    a.members.push_back(std::move(c));
  }
  if (j.at("swag_members").get<std::size_t>() > 0) {
    const auto set = model::Checkpoint::load(dir / kSwagFile);
    const auto& metas = set.model.at("members");
    for (std::size_t m = 0; m < metas.size(); ++m) {
      model::Checkpoint c;
      c.model = metas[m];
      const std::string prefix = "m" + std::to_string(m) + ".";
      for (const auto& b : set.blobs) {
        if (b.name.rfind(prefix, 0) == 0) c.blobs.push_back({b.name.substr(prefix.size()), b.shape, b.trainable, b.values});
      }
      a.swag.push_back(SwagStats::from_checkpoint(c));
    }
  }
  check_artifacts(a);
  return a;
}

std::vector<model::TrainResult> train_ensemble(const model::UNetConfig& config, const model::SplitDataset& data,
                                               const model::TrainConfig& tc, std::size_t members,
                                               std::uint64_t base_seed, TrainCache* cache) {
  if (members < 1) throw std::invalid_argument("an ensemble needs at least one member");
  std::vector<model::TrainResult> out;
  for (std::size_t i = 0; i < members; ++i) {
    try {
      out.push_back(train_base(config, data, tc, base_seed + i, cache));
    } catch (const model::TrainingDiverged& e) {
      throw MemberDiverged(i, e.what());
    }
  }
  return out;
}

MethodArtifacts train_method(const UQMethodSpec& spec, const model::UNetConfig& config,
                             const model::SplitDataset& data, const model::TrainConfig& tc, std::uint64_t seed,
                             TrainCache* cache) {
  spec.validate();
  tc.validate();
  MethodArtifacts a;
  a.spec = spec;
  a.train_config = tc;
  a.seed = seed;
  const auto keep = [&](std::uint64_t s, model::TrainResult r) {
    a.member_seeds.push_back(s);
    a.members.push_back(std::move(r.best));
    a.histories.push_back(std::move(r.history));
  };
  const auto swag_member = [&](std::uint64_t s, std::size_t index) {
    model::TrainResult first;
    try {
      first = train_base(config, data, tc, s, cache);
      auto net = model::load_segnet(first.best, nullptr);
      model::TrainConfig t = tc;
      t.seed = s;
      SwagRun run = collect_swag(*net, first.best, data, t, spec.swag);
      keep(s, std::move(first));
      a.histories.push_back(std::move(run.history));
      a.swag.push_back(std::move(run.stats));
    } catch (const model::TrainingDiverged& e) {
      if (spec.tag == MethodTag::multi_swag) throw MemberDiverged(index, e.what());
      throw;
    }
  };

  switch (spec.tag) {
    case MethodTag::base:
      keep(seed, train_base(config, data, tc, seed, cache));
      break;
    case MethodTag::ensemble: {
      auto results = train_ensemble(config, data, tc, spec.num_members, seed, cache);
      for (std::size_t i = 0; i < results.size(); ++i) keep(seed + i, std::move(results[i]));
      break;
    }
    case MethodTag::swa:
    case MethodTag::swag:
      swag_member(seed, 0);
      break;
    case MethodTag::multi_swag:
      for (std::size_t i = 0; i < spec.num_members; ++i) swag_member(seed + i, i);
      break;
    default:
      keep(seed, train_network(spec, config, data, tc, seed));
  }
  check_artifacts(a);
  return a;
}

}  // namespace uqseg::uq
