#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace refbase {

// One evaluated model placed on the common compute axis. Compute is always
// recomputed as 6ND from params/tokens, never trusted from input files.
struct RunPoint {
  std::string label;         // model name
  std::string series;        // procedure/dataset grouping for trends
  std::string dataset;
  std::string tokens_label;  // "300B", "1T", ... (scale matching is by label)
  std::string provenance;    // "internal" | "external"
  double params_n = 0;
  double tokens_d = 0;
  std::map<std::string, double> per_task;
  bool per_task_partial = false;  // avg covers tasks beyond those listed
  double average = 0;

  double compute() const;

  std::string to_json() const;
};

struct RunPointLoad {
  std::vector<RunPoint> points;
  std::vector<std::string> rejected;  // one message per rejected record
};

// JSONL, one point per line. Malformed or incomplete records (missing N or
// D, average inconsistent with per-task scores) are rejected with a report.
RunPointLoad load_runpoints_jsonl(const std::string& path);
RunPointLoad parse_runpoints_jsonl(const std::string& text, const std::string& origin);

struct ScalingSeries {
  std::string label;
  std::vector<RunPoint> points;  // strictly increasing compute
};

// Groups by series label and sorts by compute. Duplicate (series, compute)
// pairs are an error. Idempotent.
std::vector<ScalingSeries> align(const std::vector<RunPoint>& points);

// Least-squares fit of average score against log10(compute).
struct TrendFit {
  double slope = 0;
  double intercept = 0;
  std::vector<double> residuals;
};
std::optional<TrendFit> fit_trend(const ScalingSeries& series);

// ------------------------------------------------------------- rankings

struct RankEntry {
  std::string dataset;
  double score = 0;
  std::vector<std::string> near_ties;  // datasets within tie_resolution
};

struct Ranking {
  std::vector<RankEntry> entries;  // descending score, exact ties lexicographic
  std::vector<std::string> order() const;
};

// Ranks datasets among points sharing one scale: params within n_tolerance
// (pairwise relative spread) and one tokens_label. Near-ties within
// tie_resolution are reported, not collapsed.
Ranking rank_datasets(const std::vector<RunPoint>& points_at_scale,
                      double n_tolerance = 0.05, double tie_resolution = 0.001);

// Kendall tau between two orderings of the same item set (pair counting).
double kendall_tau(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct TauMatrix {
  std::vector<std::vector<double>> tau;
  double min_tau = 1.0;
};
TauMatrix rank_consistency(const std::vector<std::vector<std::string>>& rankings);

// ------------------------------------------------------------ dominance

// A point is compute-dominated iff some other point has compute <= its
// compute and average >= its average, strict in at least one. Dominated
// low-scale points are what make scaling slopes misleading.
struct DominanceReport {
  bool flagged = false;
  std::vector<RunPoint> dominators;
};
DominanceReport flag_suboptimal(const RunPoint& point, const std::vector<RunPoint>& all_points);

}  // namespace refbase
