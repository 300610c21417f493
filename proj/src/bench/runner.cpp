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

#include "uqseg/bench/runner.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "uqseg/data/io.hpp"
#include "uqseg/uq/methods.hpp"

namespace uqseg::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kPredictStream = 0x9ed1;
constexpr const char* kManifest = "manifest.json";

std::string fold_label(std::optional<std::size_t> fold) { return fold ? "fold_" + std::to_string(*fold) : "ood"; }

fs::path records_path(const fs::path& dir, const std::string& split, std::size_t t, const char* kind) {
  return dir / (std::string(kind) + "_" + split + "_T" + std::to_string(t) + ".csv");
}

fs::path heatmap_path(const fs::path& dir, const std::string& id) { return dir / ("heatmap_" + id + ".uqtn"); }

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

/// Job bookkeeping of one output directory. Written after every job.
class Manifest {
 public:
  Manifest(const BenchConfig& config) : path_(config.output / kManifest) {
    if (fs::exists(path_)) {
      j_ = read_json(path_);
      if (j_.value("config_hash", "") != config.hash()) {
        throw std::invalid_argument(config.output.string() + " holds a run of a different configuration");
      }
    } else {
      json cfg = config;
      cfg.erase("output");
      j_ = json{{"software", {{"name", "uqseg"}, {"version", kSoftwareVersion}}},
                {"config_hash", config.hash()},
                {"config", cfg},
                {"seeds", config.seeds},
                {"jobs", json::object()},
                {"failures", json::array()}};
    }
  }

  bool done(const std::string& job) const {
    const auto& jobs = j_.at("jobs");
    return jobs.contains(job) && jobs.at(job).at("status") == "done";
  }

  void record(const std::string& job, json entry) {
    j_["jobs"][job] = std::move(entry);
    json failures = json::array();
    for (const auto& [name, e] : j_["jobs"].items()) {
      if (e.at("status") == "failed") failures.push_back({{"job", name}, {"error", e.at("error")}});
    }
    j_["failures"] = failures;
    save();
  }

  void save() const { write_file(path_, j_.dump(2) + "\n"); }

 private:
  fs::path path_;
  json j_;
};

json run_job(const BenchConfig& config, const uq::UQMethodSpec& spec, const model::UNetConfig& network,
             const data::Dataset& ds, const JobSplit& plan, std::uint64_t seed, const fs::path& dir,
             uq::TrainCache& cache) {
  const std::uint64_t s = job_seed(seed, plan.fold);
  uq::MethodArtifacts art = uq::train_method(spec, network, plan.data, config.training, s, &cache);
  if (config.deterministic) {
    for (auto& h : art.histories) {
      h.train_seconds = 0.0;
      std::fill(h.epoch_seconds.begin(), h.epoch_seconds.end(), 0.0);
    }
  }
  art.save(dir / "artifacts");

  const auto budgets = budgets_for(spec, config.sample_budgets);
  const std::size_t largest = *std::max_element(budgets.begin(), budgets.end());
  for (std::size_t t : budgets) {
    uq::MethodArtifacts at = art;
    if (is_sampled(spec.tag)) at.spec.num_samples = t;
    uq::Predictor predictor(at, plan.data.train);
    for (const auto& [split, ids] : plan.eval) {
      std::vector<metrics::EvalRecord> records;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& im = ds.by_id(ids[i]);
        Rng rng = Rng(s, kPredictStream + t).derive(i);
        const PredictiveResult r = predictor.predict(im.image, rng);
        records.push_back(metrics::evaluate_image(im.id, r, im.labels, im.tumor_ratio));
        if (t == largest && i < config.heatmaps && split == plan.eval.front().first) {
          data::write_tensor(heatmap_path(dir, im.id), r.uncertainty_map);
        }
      }
      std::ostringstream rec, ret;
      metrics::write_records_csv(rec, records);
      metrics::write_retention_csv(ret, records);
      write_file(records_path(dir, split, t, "records"), rec.str());
      write_file(records_path(dir, split, t, "retention"), ret.str());
    }
  }
  return json{{"status", "done"},
              {"seed", s},
              {"member_seeds", art.member_seeds},
              {"train_epochs", art.train_epochs()},
              {"train_seconds", config.deterministic ? 0.0 : art.train_seconds()}};
}

std::vector<metrics::EvalRecord> load_records(const fs::path& dir, const std::string& split, std::size_t t) {
  std::ifstream rec(records_path(dir, split, t, "records")), ret(records_path(dir, split, t, "retention"));
  if (!rec || !ret) throw std::runtime_error("missing records in " + dir.string());
  return metrics::read_records_csv(rec, ret);
}

std::vector<std::string> eval_splits(const BenchConfig& config) {
  return config.experiment == Experiment::kfold ? std::vector<std::string>{"test"}
                                                : std::vector<std::string>{"id", "ood"};
}

std::vector<std::optional<std::size_t>> job_folds(const BenchConfig& config) {
  std::vector<std::optional<std::size_t>> folds;
  if (config.experiment == Experiment::kfold) {
    for (std::size_t k = 0; k < config.folds; ++k) folds.emplace_back(k);
  } else {
    folds.emplace_back(std::nullopt);
  }
  return folds;
}

}  // namespace

std::vector<JobSplit> plan_splits(const BenchConfig& config, const data::Dataset& ds, std::uint64_t seed) {
  std::vector<JobSplit> plans;
  if (config.experiment == Experiment::kfold) {
    const data::SplitPlan plan = data::kfold_split(ds.ids(), config.folds, seed, config.fractions);
    for (std::size_t k = 0; k < plan.folds.size(); ++k) {
      const auto& f = plan.folds[k];
      plans.push_back({k, {ds.subset(f.train), ds.subset(f.val)}, {{"test", f.test}}, json(plan)});
    }
  } else {
    const auto [in_ids, out_ids] = data::ood_split(ds, config.holdout_count(ds.images.size()));
    const data::Fold f = data::holdout_split(in_ids, seed, config.fractions);
    plans.push_back({std::nullopt,
                     {ds.subset(f.train), ds.subset(f.val)},
                     {{"id", f.test}, {"ood", out_ids}},
                     json{{"seed", seed}, {"train", f.train}, {"val", f.val}, {"test", f.test}, {"ood", out_ids}}});
  }
  return plans;
}

model::UNetConfig network_for(const BenchConfig& config, const data::Dataset& dataset) {
  model::UNetConfig n = config.network;
  n.num_classes = dataset.num_classes;
  return n;
}

std::string job_name(std::uint64_t seed, const std::string& method, std::optional<std::size_t> fold) {
  return "seed_" + std::to_string(seed) + "/" + method + "/" + fold_label(fold);
}

std::uint64_t job_seed(std::uint64_t seed, std::optional<std::size_t> fold) {
  return mix64(seed * 0x10001 + (fold ? *fold + 1 : 0));
}

BenchConfig config_from_output(const fs::path& output) {
  const json m = read_json(output / kManifest);
  json cfg = m.at("config");
  cfg["output"] = output.string();
  return cfg.get<BenchConfig>();
}

Report collect_report(const BenchConfig& config) {
  const fs::path out = config.output;
  const json manifest = read_json(out / kManifest);
  const json& jobs = manifest.at("jobs");
  const auto splits = eval_splits(config);
  const auto folds = job_folds(config);

  Report report;
  // (method index, split, budget) -> records of every seed
  std::map<std::tuple<std::size_t, std::string, std::size_t>, std::vector<metrics::EvalRecord>> pooled;
  for (std::uint64_t seed : config.seeds) {
    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
      const auto& spec = config.methods[mi];
      bool complete = true;
      for (const auto& f : folds) {
        const std::string job = job_name(seed, spec.name(), f);
        complete = complete && jobs.contains(job) && jobs.at(job).at("status") == "done";
      }
      if (!complete) continue;
      for (std::size_t t : budgets_for(spec, config.sample_budgets)) {
        std::map<std::string, std::vector<metrics::EvalRecord>> by_split;
        for (const auto& split : splits) {
          auto& recs = by_split[split];
          for (const auto& f : folds) {
            auto part = load_records(out / job_name(seed, spec.name(), f), split, t);
            recs.insert(recs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
          }
          report.seed_summaries.push_back({seed, metrics::summarize(recs, spec.name(), split, t)});
          auto& pool = pooled[{mi, split, t}];
          pool.insert(pool.end(), recs.begin(), recs.end());
        }
        if (config.experiment == Experiment::ood) {
          try {
            report.ood.push_back({seed, spec.name(), t, metrics::ood_correlation_report(by_split["id"], by_split["ood"])});
          } catch (const std::invalid_argument&) {
            // too few records for a correlation; the summaries still stand
          }
        }
      }
      if (seed == config.seeds.front()) {
        const fs::path dir = out / job_name(seed, spec.name(), folds.front());
        std::vector<fs::path> maps;
        for (const auto& e : fs::directory_iterator(dir)) {
          const std::string name = e.path().filename().string();
          if (name.rfind("heatmap_", 0) == 0 && e.path().extension() == ".uqtn") maps.push_back(e.path());
        }
        std::sort(maps.begin(), maps.end());
        for (const auto& p : maps) {
          const std::string stem = p.stem().string();
          report.heatmaps.push_back({spec.name(), stem.substr(std::string("heatmap_").size()), data::read_tensor(p)});
        }
      }
    }
  }
  for (auto& [key, recs] : pooled) {
    const auto& [mi, split, t] = key;
    const std::string name = config.methods[mi].name();
    report.summaries.push_back(metrics::summarize(recs, name, split, t));
    report.records.push_back({name, split, t, std::move(recs)});
  }
  const fs::path scal = out / "scalability.json";
  if (fs::exists(scal)) report.scalability = read_json(scal).get<std::vector<ScalabilityRow>>();
  return report;
}

RunOutcome run(const BenchConfig& config, std::ostream* log) {
  config.validate();
  fs::create_directories(config.output);
  Manifest manifest(config);
  write_file(config.output / "config.json", json(config).dump(2) + "\n");

  const data::Dataset ds = config.dataset.load();
  const model::UNetConfig network = network_for(config, ds);
  const auto t_start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  RunOutcome outcome;
  std::map<std::string, std::pair<fs::path, const JobSplit*>> first_job;  // per method, for profiling
  std::vector<std::vector<JobSplit>> plans;
  for (std::uint64_t seed : config.seeds) {
    plans.push_back(plan_splits(config, ds, seed));
    write_file(config.output / ("seed_" + std::to_string(seed)) / "split_plan.json",
               plans.back().front().plan.dump(2) + "\n");
    for (const auto& plan : plans.back()) {
      uq::TrainCache cache;  // base runs shared by the methods of one split
      for (const auto& spec : config.methods) {
        const std::string job = job_name(seed, spec.name(), plan.fold);
        const fs::path dir = config.output / job;
        ++outcome.jobs_total;
        if (manifest.done(job)) {
          ++outcome.jobs_skipped;
        } else {
          try {
            manifest.record(job, run_job(config, spec, network, ds, plan, seed, dir, cache));
            ++outcome.jobs_run;
            if (log) *log << "[" << static_cast<long>(elapsed()) << "s] done " << job << std::endl;
          } catch (const std::exception& e) {
            ++outcome.jobs_failed;
            manifest.record(job, json{{"status", "failed"}, {"error", e.what()}});
            if (log) *log << "[" << static_cast<long>(elapsed()) << "s] FAILED " << job << ": " << e.what() << std::endl;
            continue;
          }
        }
        first_job.try_emplace(spec.name(), dir, &plan);
      }
    }
  }

  std::vector<ScalabilityRow> rows;
  for (const auto& spec : config.methods) {
    const auto it = first_job.find(spec.name());
    if (it == first_job.end()) continue;
    const auto& [dir, plan] = it->second;
    const uq::MethodArtifacts art = uq::MethodArtifacts::load(dir / "artifacts");
    const auto& sample = ds.by_id(plan->eval.front().second.front());
    ScalabilityRow row = profile(art, sample.image, plan->data.train);
    if (config.deterministic) row.train_seconds = row.inference_seconds = 0.0;
    rows.push_back(row);
  }
  write_file(config.output / "scalability.json", json(rows).dump(2) + "\n");

  outcome.report = collect_report(config);
  if (!outcome.report.summaries.empty()) {
    for (auto f : {ReportFormat::csv, ReportFormat::json, ReportFormat::svg})
      emit_report(outcome.report, config.output / "report", f);
  }
  if (log) *log << "[" << static_cast<long>(elapsed()) << "s] " << outcome.jobs_run << " jobs run, "
                << outcome.jobs_skipped << " skipped, " << outcome.jobs_failed << " failed" << std::endl;
  return outcome;
}

}  // namespace uqseg::bench
