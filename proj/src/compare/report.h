#pragma once

#include <string>
#include <vector>

#include "compare/compare.h"

namespace refbase {

// Deterministic report rendering: identical inputs produce identical bytes
// (SVGs included).

std::string ranking_markdown(const Ranking& ranking);
std::string ranking_csv(const Ranking& ranking);

// All points in one table, sorted by average score descending.
std::string points_markdown(const std::vector<RunPoint>& points);
std::string points_csv(const std::vector<RunPoint>& points);

std::string trend_csv(const std::vector<ScalingSeries>& series);

// Score vs log10(compute) scatter with per-series lines. mode "fit" draws
// the least-squares trend, "connect" joins the points in compute order.
std::string scaling_svg(const std::vector<ScalingSeries>& series, const std::string& mode);

std::string dominance_markdown(const std::vector<RunPoint>& points);
std::string dominance_csv(const std::vector<RunPoint>& points);

}  // namespace refbase
