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

// uqbench: command-line front end of the benchmark.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "uqseg/bench/config.hpp"
#include "uqseg/bench/profile.hpp"
#include "uqseg/bench/report.hpp"
#include "uqseg/bench/runner.hpp"
#include "uqseg/data/io.hpp"
#include "uqseg/uq/methods.hpp"

namespace fs = std::filesystem;
using namespace uqseg;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
};

bench::BenchConfig load(const Common& c) {
  bench::BenchConfig cfg = bench::load_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (c.deterministic) cfg.deterministic = true;
  if (!c.out.empty()) cfg.output = c.out;
  return cfg;
}

const uq::UQMethodSpec& find_method(const bench::BenchConfig& cfg, const std::string& name) {
  for (const auto& m : cfg.methods)
    if (m.name() == name) return m;
  throw std::invalid_argument("config has no method '" + name + "'");
}

const bench::JobSplit& find_split(const std::vector<bench::JobSplit>& splits, std::size_t fold) {
  if (splits.size() == 1 && !splits.front().fold) return splits.front();
  if (fold >= splits.size()) throw std::invalid_argument("fold " + std::to_string(fold) + " out of range");
  return splits[fold];
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Epistemic uncertainty benchmark for segmentation"};
  app.require_subcommand(1);
  Common common;
  std::string method, artifacts, predictions, format = "csv", data_format = "uqtn";
  std::size_t fold = 0, samples = 0;

  const auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("--config", common.config, "JSON benchmark configuration");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "use this seed instead of the configured list");
    sub->add_flag("--deterministic", common.deterministic, "canonical outputs (wall-clock fields written as 0)");
    sub->add_option("--out", common.out, "output directory");
  };

  auto* gen = app.add_subcommand("generate-data", "write the configured synthetic dataset to --out");
  add_common(gen);
  gen->add_option("--data-format", data_format, "uqtn or nifti")->check(CLI::IsMember({"uqtn", "nifti"}));

  auto* train = app.add_subcommand("train", "train one method on one fold; artifacts go to --out");
  add_common(train);
  train->add_option("--method", method, "method name from the config")->required();
  train->add_option("--fold", fold, "fold index (kfold experiments)");

  auto* predict = app.add_subcommand("predict", "predict the evaluation images of a fold with trained artifacts");
  add_common(predict);
  predict->add_option("--artifacts", artifacts, "directory written by train")->required()->check(CLI::ExistingDirectory);
  predict->add_option("--fold", fold, "fold index (kfold experiments)");
  predict->add_option("--samples", samples, "sample count for sampled methods (default: config)");

  auto* evaluate = app.add_subcommand("evaluate", "score predictions against the ground truth");
  add_common(evaluate);
  evaluate->add_option("--predictions", predictions, "directory written by predict")->required()->check(CLI::ExistingDirectory);

  auto* prof = app.add_subcommand("profile", "time and memory profile of trained artifacts");
  add_common(prof);
  prof->add_option("--artifacts", artifacts, "directory written by train")->required()->check(CLI::ExistingDirectory);
  prof->add_option("--fold", fold, "fold whose first evaluation image is timed");

  auto* run = app.add_subcommand("run", "run the whole configured experiment (resumable)");
  add_common(run);

  auto* report = app.add_subcommand("report", "re-emit the reports of a finished run");
  add_common(report, false);
  report->add_option("--format", format, "csv, json or svg")->check(CLI::IsMember({"csv", "json", "svg"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = load(common);
      if (common.out.empty()) throw std::invalid_argument("--out is required");
      data::write_dataset(cfg.dataset.load(), common.out, data_format);
      return 0;
    }
    if (run->parsed()) {
      const auto outcome = bench::run(load(common), &std::cerr);
      return outcome.ok() ? 0 : 1;
    }
    if (report->parsed()) {
      if (common.out.empty()) throw std::invalid_argument("--out must name a run directory");
      bench::BenchConfig cfg = bench::config_from_output(common.out);
      for (const auto& p : bench::emit_report(bench::collect_report(cfg), fs::path(common.out) / "report",
                                              bench::parse_report_format(format)))
        std::cout << p.string() << '\n';
      return 0;
    }

    const auto cfg = load(common);
    const data::Dataset ds = cfg.dataset.load();
    const std::uint64_t seed = cfg.seeds.front();
    const auto splits = bench::plan_splits(cfg, ds, seed);
    const auto& split = find_split(splits, fold);
    const fs::path out = common.out.empty() ? fs::path(".") : fs::path(common.out);

    if (train->parsed()) {
      const auto& spec = find_method(cfg, method);
      auto art = uq::train_method(spec, bench::network_for(cfg, ds), split.data, cfg.training,
                                  bench::job_seed(seed, split.fold));
      art.save(out);
      std::cout << "trained " << spec.name() << ": " << art.train_epochs() << " epochs\n";
      return 0;
    }
    if (predict->parsed()) {
      auto art = uq::MethodArtifacts::load(artifacts);
      if (samples > 0 && bench::is_sampled(art.spec.tag)) art.spec.num_samples = samples;
      uq::Predictor predictor(art, split.data.train);
      json index = json::array();
      for (const auto& [name, ids] : split.eval) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const auto& im = ds.by_id(ids[i]);
          Rng rng = Rng(art.seed, 0x9ed1 + art.spec.num_samples).derive(i);
          const auto r = predictor.predict(im.image, rng);
          data::write_tensor(out / (im.id + "_probs.uqtn"), r.mean_probs);
          data::write_tensor(out / (im.id + "_uncertainty.uqtn"), r.uncertainty_map);
          index.push_back({{"id", im.id}, {"split", name}, {"inference_seconds", cfg.deterministic ? 0.0 : r.inference_seconds}});
        }
      }
      write_json(out / "predictions.json",
                 {{"method", art.spec.name()}, {"n_samples", predictor.passes()}, {"images", index}});
      return 0;
    }
    if (evaluate->parsed()) {
      const fs::path in = predictions;
      std::ifstream f(in / "predictions.json");
      if (!f) throw std::runtime_error("no predictions.json in " + in.string());
      const json idx = json::parse(f);
      std::map<std::string, std::vector<metrics::EvalRecord>> by_split;
      for (const auto& e : idx.at("images")) {
        const auto& im = ds.by_id(e.at("id"));
        PredictiveResult r;
        r.mean_probs = data::read_tensor(in / (im.id + "_probs.uqtn"));
        r.uncertainty_map = data::read_tensor(in / (im.id + "_uncertainty.uqtn"));
        by_split[e.at("split")].push_back(metrics::evaluate_image(im.id, r, im.labels, im.tumor_ratio));
      }
      std::vector<metrics::SummaryRow> rows;
      for (const auto& [name, recs] : by_split) {
        std::ofstream rec(out / ("records_" + name + ".csv")), ret(out / ("retention_" + name + ".csv"));
        metrics::write_records_csv(rec, recs);
        metrics::write_retention_csv(ret, recs);
        rows.push_back(metrics::summarize(recs, idx.at("method"), name, idx.at("n_samples")));
      }
      std::ofstream sum(out / "summary.csv");
      bench::write_summary_csv(sum, rows);
      bench::write_summary_csv(std::cout, rows);
      return 0;
    }
    if (prof->parsed()) {
      const auto art = uq::MethodArtifacts::load(artifacts);
      auto row = bench::profile(art, ds.by_id(split.eval.front().second.front()).image, split.data.train);
      if (cfg.deterministic) row.train_seconds = row.inference_seconds = 0.0;
      const json j = row;
      if (!common.out.empty()) write_json(out / "profile.json", j);
      std::cout << j.dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "uqbench: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
