#include "compare/compare.h"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>
#include <sstream>

#include "core/binio.h"
#include "core/error.h"
#include "ledger/ledger.h"

namespace refbase {

double RunPoint::compute() const { return total_compute(params_n, tokens_d); }

std::string RunPoint::to_json() const {
  nlohmann::json j;
  j["label"] = label;
  j["series"] = series;
  j["dataset"] = dataset;
  j["tokens_label"] = tokens_label;
  j["provenance"] = provenance;
  j["params"] = params_n;
  j["tokens"] = tokens_d;
  j["per_task"] = per_task;
  if (per_task_partial) j["per_task_partial"] = true;
  j["average"] = average;
  return j.dump();
}

RunPointLoad parse_runpoints_jsonl(const std::string& text, const std::string& origin) {
  RunPointLoad load;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      load.rejected.push_back(where + ": bad json: " + e.what());
      continue;
    }
    RunPoint p;
    try {
      p.label = j.at("label").get<std::string>();
      p.dataset = j.value("dataset", "-");
      p.series = j.value("series", p.label + "/" + p.dataset);
      p.tokens_label = j.value("tokens_label", "");
      p.provenance = j.value("provenance", "external");
      if (!j.contains("params")) {
        load.rejected.push_back(where + ": point '" + p.label + "' missing params N");
        continue;
      }
      if (!j.contains("tokens")) {
        load.rejected.push_back(where + ": point '" + p.label + "' missing tokens D");
        continue;
      }
      p.params_n = j.at("params").get<double>();
      p.tokens_d = j.at("tokens").get<double>();
      if (j.contains("per_task"))
        p.per_task = j.at("per_task").get<std::map<std::string, double>>();
      p.per_task_partial = j.value("per_task_partial", false);
      p.average = j.at("average").get<double>();
    } catch (const nlohmann::json::exception& e) {
      load.rejected.push_back(where + ": schema: " + e.what());
      continue;
    }
    if (p.params_n <= 0 || p.tokens_d <= 0) {
      load.rejected.push_back(where + ": point '" + p.label + "' needs positive N and D");
      continue;
    }
    if (!p.per_task.empty() && !p.per_task_partial) {
      double sum = 0;
      for (const auto& [k, v] : p.per_task) sum += v;
      const double mean = sum / static_cast<double>(p.per_task.size());
      if (std::fabs(mean - p.average) > 0.005) {
        load.rejected.push_back(where + ": point '" + p.label + "' average " +
                                std::to_string(p.average) + " disagrees with per-task mean " +
                                std::to_string(mean));
        continue;
      }
    }
    load.points.push_back(std::move(p));
  }
  return load;
}

RunPointLoad load_runpoints_jsonl(const std::string& path) {
  return parse_runpoints_jsonl(read_file_bytes(path), path);
}

std::vector<ScalingSeries> align(const std::vector<RunPoint>& points) {
  std::vector<ScalingSeries> out;
  for (const RunPoint& p : points) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const ScalingSeries& s) { return s.label == p.series; });
    if (it == out.end()) {
      out.push_back({p.series, {p}});
    } else {
      it->points.push_back(p);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const ScalingSeries& a, const ScalingSeries& b) { return a.label < b.label; });
  for (auto& series : out) {
    std::sort(series.points.begin(), series.points.end(),
              [](const RunPoint& a, const RunPoint& b) {
                if (a.compute() != b.compute()) return a.compute() < b.compute();
                return a.label < b.label;
              });
    for (size_t i = 1; i < series.points.size(); ++i)
      if (series.points[i].compute() == series.points[i - 1].compute())
        throw DataError("align: series '" + series.label + "' has duplicate compute " +
                        format_sig_figs(series.points[i].compute(), 3) + " (" +
                        series.points[i - 1].label + " / " + series.points[i].label + ")");
  }
  return out;
}

std::optional<TrendFit> fit_trend(const ScalingSeries& series) {
  const size_t n = series.points.size();
  if (n < 2) return std::nullopt;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const RunPoint& p : series.points) {
    const double x = std::log10(p.compute());
    sx += x;
    sy += p.average;
    sxx += x * x;
    sxy += x * p.average;
  }
  const double dn = static_cast<double>(n);
  const double denom = dn * sxx - sx * sx;
  if (denom == 0) return std::nullopt;  // all points at one compute (blocked by align)
  TrendFit fit;
  fit.slope = (dn * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / dn;
  for (const RunPoint& p : series.points)
    fit.residuals.push_back(p.average - (fit.slope * std::log10(p.compute()) + fit.intercept));
  return fit;
}

std::vector<std::string> Ranking::order() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.dataset);
  return out;
}

Ranking rank_datasets(const std::vector<RunPoint>& points, double n_tolerance,
                      double tie_resolution) {
  if (points.empty()) throw DataError("rank_datasets: no points");
  double n_min = points[0].params_n, n_max = points[0].params_n;
  const std::string& tokens = points[0].tokens_label;
  for (const RunPoint& p : points) {
    n_min = std::min(n_min, p.params_n);
    n_max = std::max(n_max, p.params_n);
    if (p.tokens_label != tokens)
      throw DataError("rank_datasets: mixed token scales '" + tokens + "' vs '" +
                      p.tokens_label + "'");
  }
  if (n_max / n_min - 1.0 > n_tolerance)
    throw DataError("rank_datasets: params spread " +
                    std::to_string((n_max / n_min - 1.0) * 100) + "% exceeds tolerance");

  std::vector<RankEntry> entries;
  for (const RunPoint& p : points) entries.push_back({p.dataset, p.average, {}});
  std::sort(entries.begin(), entries.end(), [](const RankEntry& a, const RankEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.dataset < b.dataset;  // exact ties break lexicographically
  });
  for (size_t i = 0; i < entries.size(); ++i)
    for (size_t j = 0; j < entries.size(); ++j)
      if (i != j && std::fabs(entries[i].score - entries[j].score) <= tie_resolution + 1e-12)
        entries[i].near_ties.push_back(entries[j].dataset);
  Ranking r;
  r.entries = std::move(entries);
  return r;
}

double kendall_tau(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DataError("kendall_tau: rankings must cover the same set of >= 2 items");
  std::map<std::string, size_t> pos_b;
  for (size_t i = 0; i < b.size(); ++i) pos_b[b[i]] = i;
  if (pos_b.size() != b.size()) throw DataError("kendall_tau: duplicate items in ranking");
  for (const auto& item : a)
    if (pos_b.find(item) == pos_b.end())
      throw DataError("kendall_tau: rankings cover different sets ('" + item + "' missing)");

  const size_t n = a.size();
  int64_t concordant = 0, discordant = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      // a places a[i] before a[j]; check b's relative order
      if (pos_b[a[i]] < pos_b[a[j]])
        ++concordant;
      else
        ++discordant;
    }
  }
  return static_cast<double>(concordant - discordant) /
         (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

TauMatrix rank_consistency(const std::vector<std::vector<std::string>>& rankings) {
  if (rankings.size() < 2) throw DataError("rank_consistency: need at least 2 rankings");
  TauMatrix m;
  m.tau.assign(rankings.size(), std::vector<double>(rankings.size(), 1.0));
  for (size_t i = 0; i < rankings.size(); ++i) {
    for (size_t j = i + 1; j < rankings.size(); ++j) {
      const double t = kendall_tau(rankings[i], rankings[j]);
      m.tau[i][j] = m.tau[j][i] = t;
      m.min_tau = std::min(m.min_tau, t);
    }
  }
  return m;
}

DominanceReport flag_suboptimal(const RunPoint& point, const std::vector<RunPoint>& all_points) {
  DominanceReport report;
  for (const RunPoint& other : all_points) {
    if (other.label == point.label && other.dataset == point.dataset &&
        other.tokens_label == point.tokens_label)
      continue;  // never compare a point against itself
    const bool no_worse =
        other.compute() <= point.compute() && other.average >= point.average;
    const bool strictly_better =
        other.compute() < point.compute() || other.average > point.average;
    if (no_worse && strictly_better) report.dominators.push_back(other);
  }
  std::sort(report.dominators.begin(), report.dominators.end(),
            [](const RunPoint& a, const RunPoint& b) {
              if (a.average != b.average) return a.average > b.average;
              return a.label < b.label;
            });
  report.flagged = !report.dominators.empty();
  return report;
}

}  // namespace refbase
