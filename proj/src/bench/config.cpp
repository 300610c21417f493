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

#include "uqseg/bench/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "uqseg/core/json_keys.hpp"

namespace uqseg::bench {

using nlohmann::json;

data::Dataset DatasetSource::load() const {
  if (kind == Kind::directory) return data::read_dataset(path);
  return data::synth_generate(count, generator, seed);
}

Experiment parse_experiment(const std::string& tag) {
  if (tag == "kfold") return Experiment::kfold;
  if (tag == "ood") return Experiment::ood;
  throw std::invalid_argument("unknown experiment '" + tag + "'");
}

std::string to_string(Experiment e) { return e == Experiment::kfold ? "kfold" : "ood"; }

bool is_sampled(uq::MethodTag tag) {
  using uq::MethodTag;
  switch (tag) {
    case MethodTag::mc_dropout:
    case MethodTag::concrete_dropout:
    case MethodTag::rank1_bnn:
    case MethodTag::lp_bnn:
    case MethodTag::swag:
    case MethodTag::multi_swag:
      return true;
    default:
      return false;
  }
}

std::vector<std::size_t> budgets_for(const uq::UQMethodSpec& spec, const std::vector<std::size_t>& budgets) {
  using uq::MethodTag;
  if (is_sampled(spec.tag)) return budgets;
  if (spec.tag == MethodTag::ensemble || spec.tag == MethodTag::batch_ensemble) return {spec.num_members};
  return {1};
}

void BenchConfig::validate() const {
  if (methods.empty()) throw std::invalid_argument("config lists no methods");
  std::set<std::string> names;
  for (const auto& m : methods) {
    m.validate();
    if (!names.insert(m.name()).second) throw std::invalid_argument("method " + m.name() + " listed twice");
  }
  if (sample_budgets.empty()) throw std::invalid_argument("sample_budgets is empty");
  for (auto b : sample_budgets)
    if (b < 1) throw std::invalid_argument("sample budgets must be at least 1");
  if (seeds.empty()) throw std::invalid_argument("seeds is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw std::invalid_argument("seeds repeat");
  if (experiment == Experiment::kfold && folds < 2) throw std::invalid_argument("kfold needs at least 2 folds");
  if (dataset.kind == DatasetSource::Kind::synthetic) {
    dataset.generator.validate();
    if (dataset.count == 0) throw std::invalid_argument("dataset count must be positive");
  } else if (dataset.path.empty()) {
    throw std::invalid_argument("dataset directory path missing");
  }
  network.validate();
  training.validate();
}

std::size_t BenchConfig::holdout_count(std::size_t n) const {
  if (ood_holdout) return *ood_holdout;
  // 50 of 281 instances, scaled to the dataset size
  return static_cast<std::size_t>(std::lround(50.0 * static_cast<double>(n) / 281.0));
}

std::string BenchConfig::hash() const {
  json j = *this;
  j.erase("output");
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void to_json(json& j, const BenchConfig& c) {
  json ds;
  if (c.dataset.kind == DatasetSource::Kind::synthetic) {
    ds = {{"kind", "synthetic"}, {"generator", c.dataset.generator}, {"count", c.dataset.count}, {"seed", c.dataset.seed}};
  } else {
    ds = {{"kind", "directory"}, {"path", c.dataset.path.string()}};
  }
  j = json{{"dataset", ds},
           {"experiment", to_string(c.experiment)},
           {"folds", c.folds},
           {"ood_holdout", c.ood_holdout ? json(*c.ood_holdout) : json(nullptr)},
           {"fractions", {{"train", c.fractions.train}, {"val", c.fractions.val}, {"test", c.fractions.test}}},
           {"methods", c.methods},
           {"sample_budgets", c.sample_budgets},
           {"seeds", c.seeds},
           {"output", c.output.string()},
           {"deterministic", c.deterministic},
           {"network", c.network},
           {"training", c.training},
           {"heatmaps", c.heatmaps}};
}

void from_json(const json& j, BenchConfig& c) {
  check_keys(j,
             {"dataset", "experiment", "folds", "ood_holdout", "fractions", "methods", "sample_budgets", "seeds",
              "output", "deterministic", "network", "training", "heatmaps"},
             "bench config");
  const BenchConfig d;
  c = BenchConfig{};
  if (j.contains("dataset")) {
    const json& ds = j.at("dataset");
    const std::string kind = ds.value("kind", "synthetic");
    if (kind == "synthetic") {
      check_keys(ds, {"kind", "generator", "count", "seed"}, "dataset");
      c.dataset.kind = DatasetSource::Kind::synthetic;
      if (ds.contains("generator")) c.dataset.generator = ds.at("generator").get<data::SynthConfig>();
      c.dataset.count = ds.value("count", d.dataset.count);
      c.dataset.seed = ds.value("seed", d.dataset.seed);
    } else if (kind == "directory") {
      check_keys(ds, {"kind", "path"}, "dataset");
      c.dataset.kind = DatasetSource::Kind::directory;
      c.dataset.path = ds.at("path").get<std::string>();
    } else {
      throw std::invalid_argument("unknown dataset kind '" + kind + "'");
    }
  }
  c.experiment = parse_experiment(j.value("experiment", to_string(d.experiment)));
  c.folds = j.value("folds", d.folds);
  if (j.contains("ood_holdout") && !j.at("ood_holdout").is_null()) c.ood_holdout = j.at("ood_holdout").get<std::size_t>();
  if (j.contains("fractions")) {
    const json& f = j.at("fractions");
    check_keys(f, {"train", "val", "test"}, "fractions");
    c.fractions.train = f.value("train", d.fractions.train);
    c.fractions.val = f.value("val", d.fractions.val);
    c.fractions.test = f.value("test", d.fractions.test);
  }
  c.methods = j.value("methods", std::vector<uq::UQMethodSpec>{});
  c.sample_budgets = j.value("sample_budgets", d.sample_budgets);
  c.seeds = j.value("seeds", d.seeds);
  c.output = j.value("output", d.output.string());
  c.deterministic = j.value("deterministic", d.deterministic);
  if (j.contains("network")) c.network = j.at("network").get<model::UNetConfig>();
  if (j.contains("training")) c.training = j.at("training").get<model::TrainConfig>();
  c.heatmaps = j.value("heatmaps", d.heatmaps);
  c.validate();
}

BenchConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return j.get<BenchConfig>();
}

}  // namespace uqseg::bench
