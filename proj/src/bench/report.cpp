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

#include "uqseg/bench/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace uqseg::bench {

using metrics::format_double;
using nlohmann::json;

ReportFormat parse_report_format(const std::string& tag) {
  if (tag == "csv") return ReportFormat::csv;
  if (tag == "json") return ReportFormat::json;
  if (tag == "svg") return ReportFormat::svg;
  throw std::invalid_argument("unknown report format '" + tag + "'");
}

std::string to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::csv:
      return "csv";
    case ReportFormat::json:
      return "json";
    case ReportFormat::svg:
      return "svg";
  }
  return "";
}

namespace {

constexpr const char* kSummaryHeader = "method,split,n_samples,dsc_mean,dsc_std,pearson_r,rauc_mean,rauc_std";

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

void summary_fields(std::ostream& os, const metrics::SummaryRow& r) {
  os << r.method << ',' << r.split << ',' << r.n_samples << ',' << format_double(r.dsc_mean) << ','
     << format_double(r.dsc_std) << ',' << opt(r.pearson_r) << ',' << format_double(r.rauc_mean) << ','
     << format_double(r.rauc_std);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

/// Keeps a file name to letters, digits, '-', '_' and '.'.
std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out;
}

const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

std::string retention_svg(const std::string& split, const std::vector<const RecordSet*>& sets) {
  const double w = 640, h = 420, left = 60, right = 170, top = 30, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  std::vector<std::vector<double>> curves;
  double ymax = 0.0;
  for (const auto* s : sets) {
    curves.push_back(mean_retention(s->records));
    for (double e : curves.back()) ymax = std::max(ymax, e);
  }
  if (ymax <= 0.0) ymax = 1.0;

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\">\n"
     << "<title>Error retention, " << xml_escape(split) << "</title>\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n"
     << "<g stroke=\"black\" stroke-width=\"1\">\n"
     << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n"
     << "</g>\n"
     << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double f = k / 4.0;
    os << "<text x=\"" << fixed(left + f * pw) << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\">"
       << fixed(f) << "</text>\n"
       << "<text x=\"" << left - 5 << "\" y=\"" << fixed(top + ph - f * ph + 4) << "\" text-anchor=\"end\">"
       << fixed(f * ymax) << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">fraction</text>\n"
     << "<text x=\"15\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << top + ph / 2
     << ")\">error</text>\n"
     << "</g>\n";
  for (std::size_t i = 0; i < sets.size(); ++i) {
    os << "<polyline fill=\"none\" stroke=\"" << color(i) << "\" stroke-width=\"1.5\" data-method=\""
       << xml_escape(sets[i]->method) << "\" points=\"";
    for (std::size_t k = 0; k < curves[i].size(); ++k) {
      const double f = static_cast<double>(k) / static_cast<double>(curves[i].size() - 1);
      os << (k ? " " : "") << fixed(left + f * pw) << ',' << fixed(top + ph - curves[i][k] / ymax * ph);
    }
    os << "\"/>\n";
    const double ly = top + 10 + 16 * static_cast<double>(i);
    os << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 35 << "\" y2=\"" << ly
       << "\" stroke=\"" << color(i) << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << left + pw + 40 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << xml_escape(sets[i]->method) << " (T=" << sets[i]->n_samples << ")</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string heatmap_svg(const Heatmap& m) {
  if (m.uncertainty.rank() != 2) throw ShapeError("heat map must be [H, W]");
  const std::size_t hgt = m.uncertainty.dim(0), wid = m.uncertainty.dim(1);
  const auto d = m.uncertainty.data();
  const double top = d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
  const int px = 4;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << wid * px << "\" height=\"" << hgt * px
     << "\" shape-rendering=\"crispEdges\">\n"
     << "<title>" << xml_escape(m.method) << ' ' << xml_escape(m.image_id) << " uncertainty (max "
     << format_double(top) << ")</title>\n";
  for (std::size_t r = 0; r < hgt; ++r) {
    for (std::size_t c = 0; c < wid; ++c) {
      const double v = top > 0 ? d[r * wid + c] / top : 0.0;
      // black to yellow through red
      const int red = static_cast<int>(std::lround(255 * std::min(1.0, 2 * v)));
      const int green = static_cast<int>(std::lround(255 * std::max(0.0, 2 * v - 1)));
      os << "<rect x=\"" << c * px << "\" y=\"" << r * px << "\" width=\"" << px << "\" height=\"" << px
         << "\" fill=\"rgb(" << red << ',' << green << ",0)\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

json report_json(const Report& r) {
  json j{{"summaries", json::array()},
         {"seed_summaries", json::array()},
         {"scalability", r.scalability},
         {"ood_correlation", json::array()},
         {"retention", json::array()}};
  const auto row = [](const metrics::SummaryRow& s) {
    return json{{"method", s.method},       {"split", s.split},
                {"n_samples", s.n_samples}, {"n_images", s.n_images},
                {"dsc_mean", s.dsc_mean},   {"dsc_std", s.dsc_std},
                {"pearson_r", s.pearson_r ? json(*s.pearson_r) : json(nullptr)},
                {"rauc_mean", s.rauc_mean}, {"rauc_std", s.rauc_std}};
  };
  for (const auto& s : r.summaries) j["summaries"].push_back(row(s));
  for (const auto& s : r.seed_summaries) {
    json e = row(s.row);
    e["seed"] = s.seed;
    j["seed_summaries"].push_back(e);
  }
  const auto o = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  for (const auto& c : r.ood) {
    j["ood_correlation"].push_back({{"seed", c.seed},
                                    {"method", c.method},
                                    {"n_samples", c.n_samples},
                                    {"ratio_error", o(c.correlation.ratio_error)},
                                    {"uq_error", o(c.correlation.uq_error)},
                                    {"uq_ratio", o(c.correlation.uq_ratio)},
                                    {"n_records", c.correlation.n_records},
                                    {"n_undefined", c.correlation.n_undefined}});
  }
  for (const auto& s : r.records) {
    j["retention"].push_back(
        {{"method", s.method}, {"split", s.split}, {"n_samples", s.n_samples}, {"mean_error", mean_retention(s.records)}});
  }
  return j;
}

}  // namespace

std::vector<double> mean_retention(const std::vector<metrics::EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no records for a retention curve");
  std::vector<double> out(metrics::kRetentionPoints, 0.0);
  for (const auto& r : records)
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += r.retention.errors[k];
  for (auto& v : out) v /= static_cast<double>(records.size());
  return out;
}

void write_summary_csv(std::ostream& os, const std::vector<metrics::SummaryRow>& rows) {
  os << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    summary_fields(os, r);
    os << '\n';
  }
}

std::vector<metrics::SummaryRow> read_summary_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kSummaryHeader) throw std::invalid_argument("not a summary CSV");
  std::vector<metrics::SummaryRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw std::invalid_argument("summary CSV row has " + std::to_string(f.size()) + " fields");
    metrics::SummaryRow r;
    r.method = f[0];
    r.split = f[1];
    r.n_samples = std::stoul(f[2]);
    r.dsc_mean = std::stod(f[3]);
    r.dsc_std = std::stod(f[4]);
    if (!f[5].empty()) r.pearson_r = std::stod(f[5]);
    r.rauc_mean = std::stod(f[6]);
    r.rauc_std = std::stod(f[7]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& dir,
                                               ReportFormat format) {
  if (report.summaries.empty()) throw std::invalid_argument("report has no method summaries");
  std::vector<std::pair<std::string, std::string>> files;

  switch (format) {
    case ReportFormat::csv: {
      std::ostringstream s;
      write_summary_csv(s, report.summaries);
      files.emplace_back("summary.csv", s.str());
      if (!report.seed_summaries.empty()) {
        std::ostringstream b;
        b << "seed," << kSummaryHeader << '\n';
        for (const auto& r : report.seed_summaries) {
          b << r.seed << ',';
          summary_fields(b, r.row);
          b << '\n';
        }
        files.emplace_back("summary_by_seed.csv", b.str());
      }
      if (!report.scalability.empty()) {
        std::ostringstream c;
        c << "method,train_epochs,train_seconds,inference_seconds,total_params,params_size_mb,pass_size_mb,"
             "train_epochs_per_member\n";
        for (const auto& r : report.scalability) {
          c << r.method << ',' << r.train_epochs << ',' << format_double(r.train_seconds) << ','
            << format_double(r.inference_seconds) << ',' << r.total_params << ',' << format_double(r.params_size_mb)
            << ',' << format_double(r.pass_size_mb) << ',' << format_double(r.train_epochs_per_member) << '\n';
        }
        files.emplace_back("scalability.csv", c.str());
      }
      if (!report.ood.empty()) {
        std::ostringstream c;
        c << "seed,method,n_samples,ratio_error,uq_error,uq_ratio,n_records,n_undefined\n";
        for (const auto& r : report.ood) {
          c << r.seed << ',' << r.method << ',' << r.n_samples << ',' << opt(r.correlation.ratio_error) << ','
            << opt(r.correlation.uq_error) << ',' << opt(r.correlation.uq_ratio) << ',' << r.correlation.n_records
            << ',' << r.correlation.n_undefined << '\n';
        }
        files.emplace_back("ood_correlation.csv", c.str());
      }
      break;
    }
    case ReportFormat::json:
      files.emplace_back("report.json", report_json(report).dump(2) + "\n");
      break;
    case ReportFormat::svg: {
      // per split, each method at its largest budget
      std::map<std::string, std::map<std::string, const RecordSet*>> best;
      for (const auto& s : report.records) {
        if (s.records.empty()) continue;
        auto& slot = best[s.split][s.method];
        if (!slot || s.n_samples > slot->n_samples) slot = &s;
      }
      for (const auto& [split, methods] : best) {
        std::vector<const RecordSet*> sets;
        for (const auto& m : report.summaries) {
          auto it = methods.find(m.method);
          if (it != methods.end() && std::find(sets.begin(), sets.end(), it->second) == sets.end()) sets.push_back(it->second);
        }
        files.emplace_back("retention_" + file_safe(split) + ".svg", retention_svg(split, sets));
      }
      for (const auto& m : report.heatmaps) {
        files.emplace_back("heatmap_" + file_safe(m.method) + "_" + file_safe(m.image_id) + ".svg", heatmap_svg(m));
      }
      break;
    }
  }

  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [name, text] : files) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace uqseg::bench
