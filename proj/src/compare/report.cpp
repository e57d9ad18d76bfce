#include "compare/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "core/error.h"
#include "ledger/ledger.h"

namespace refbase {

namespace {

std::string num(double v, const char* fmt = "%.4g") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::vector<RunPoint> by_average_desc(std::vector<RunPoint> points) {
  std::sort(points.begin(), points.end(), [](const RunPoint& a, const RunPoint& b) {
    if (a.average != b.average) return a.average > b.average;
    return a.label < b.label;
  });
  return points;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string ranking_markdown(const Ranking& ranking) {
  std::ostringstream os;
  os << "| rank | dataset | score | near ties |\n|---|---|---|---|\n";
  for (size_t i = 0; i < ranking.entries.size(); ++i) {
    const RankEntry& e = ranking.entries[i];
    os << "| " << (i + 1) << " | " << e.dataset << " | " << num(e.score, "%.3f") << " | ";
    for (size_t t = 0; t < e.near_ties.size(); ++t) os << (t ? ", " : "") << e.near_ties[t];
    if (e.near_ties.empty()) os << "-";
    os << " |\n";
  }
  return os.str();
}

std::string ranking_csv(const Ranking& ranking) {
  std::ostringstream os;
  os << "rank,dataset,score,near_ties\n";
  for (size_t i = 0; i < ranking.entries.size(); ++i) {
    const RankEntry& e = ranking.entries[i];
    os << (i + 1) << ',' << e.dataset << ',' << num(e.score, "%.6g") << ',';
    for (size_t t = 0; t < e.near_ties.size(); ++t) os << (t ? ";" : "") << e.near_ties[t];
    os << '\n';
  }
  return os.str();
}

std::string points_markdown(const std::vector<RunPoint>& points) {
  std::ostringstream os;
  os << "| model | dataset | tokens | params (B) | compute (FLOPs) | avg |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const RunPoint& p : by_average_desc(points)) {
    os << "| " << p.label << " | " << p.dataset << " | " << p.tokens_label << " | "
       << num(p.params_n / 1e9, "%.2f") << " | " << format_sig_figs(p.compute(), 3) << " | "
       << num(p.average, "%.2f") << " |\n";
  }
  return os.str();
}

std::string points_csv(const std::vector<RunPoint>& points) {
  std::ostringstream os;
  os << "label,dataset,tokens_label,params_n,tokens_d,compute,average,provenance\n";
  for (const RunPoint& p : by_average_desc(points)) {
    os << p.label << ',' << p.dataset << ',' << p.tokens_label << ','
       << num(p.params_n, "%.6g") << ',' << num(p.tokens_d, "%.6g") << ','
       << num(p.compute(), "%.6g") << ',' << num(p.average, "%.6g") << ',' << p.provenance
       << '\n';
  }
  return os.str();
}

std::string trend_csv(const std::vector<ScalingSeries>& series) {
  std::ostringstream os;
  os << "series,label,compute,log10_compute,average,fit_slope,fit_intercept,residual\n";
  for (const ScalingSeries& s : series) {
    const auto fit = fit_trend(s);
    for (size_t i = 0; i < s.points.size(); ++i) {
      const RunPoint& p = s.points[i];
      os << s.label << ',' << p.label << ',' << num(p.compute(), "%.6g") << ','
         << num(std::log10(p.compute()), "%.6g") << ',' << num(p.average, "%.6g") << ',';
      if (fit)
        os << num(fit->slope, "%.6g") << ',' << num(fit->intercept, "%.6g") << ','
           << num(fit->residuals[i], "%.6g");
      else
        os << ",,";
      os << '\n';
    }
  }
  return os.str();
}

std::string scaling_svg(const std::vector<ScalingSeries>& series, const std::string& mode) {
  if (mode != "fit" && mode != "connect")
    throw ConfigError("scaling_svg: mode must be 'fit' or 'connect'");
  const double width = 860, height = 520;
  const double ml = 70, mr = 210, mt = 30, mb = 50;
  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      const double x = std::log10(p.compute());
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, p.average);
      y_max = std::max(y_max, p.average);
    }
  }
  if (x_min > x_max) throw DataError("scaling_svg: no points");
  if (x_max - x_min < 1e-9) { x_min -= 0.5; x_max += 0.5; }
  const double pad = std::max(0.02, (y_max - y_min) * 0.1);
  y_min -= pad;
  y_max += pad;

  auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr); };
  auto py = [&](double y) { return height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  os << "<line x1=\"" << num(ml) << "\" y1=\"" << num(height - mb) << "\" x2=\""
     << num(width - mr) << "\" y2=\"" << num(height - mb) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << num(ml) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(ml)
     << "\" y2=\"" << num(height - mb) << "\" stroke=\"black\"/>\n";
  for (int gx = static_cast<int>(std::ceil(x_min)); gx <= static_cast<int>(std::floor(x_max)); ++gx) {
    os << "<line x1=\"" << num(px(gx)) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(px(gx))
       << "\" y2=\"" << num(height - mb) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << num(px(gx)) << "\" y=\"" << num(height - mb + 18)
       << "\" font-size=\"12\" text-anchor=\"middle\">1e" << gx << "</text>\n";
  }
  for (double gy = std::ceil(y_min * 10) / 10; gy <= y_max + 1e-9; gy += 0.1) {
    os << "<line x1=\"" << num(ml) << "\" y1=\"" << num(py(gy)) << "\" x2=\"" << num(width - mr)
       << "\" y2=\"" << num(py(gy)) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << num(ml - 8) << "\" y=\"" << num(py(gy) + 4)
       << "\" font-size=\"12\" text-anchor=\"end\">" << num(gy, "%.1f") << "</text>\n";
  }
  os << "<text x=\"" << num((ml + width - mr) / 2) << "\" y=\"" << num(height - 12)
     << "\" font-size=\"13\" text-anchor=\"middle\">training compute, FLOPs (6ND)</text>\n";
  os << "<text x=\"18\" y=\"" << num((mt + height - mb) / 2)
     << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << num((mt + height - mb) / 2) << ")\">average benchmark score</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const ScalingSeries& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const bool internal = !s.points.empty() && s.points[0].provenance == "internal";
    const char* dash = internal ? "" : " stroke-dasharray=\"6 4\"";
    if (mode == "connect" && s.points.size() > 1) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << dash
         << " points=\"";
      for (const auto& p : s.points)
        os << num(px(std::log10(p.compute()))) << "," << num(py(p.average)) << " ";
      os << "\"/>\n";
    } else if (mode == "fit") {
      if (auto fit = fit_trend(s)) {
        const double xa = std::log10(s.points.front().compute());
        const double xb = std::log10(s.points.back().compute());
        os << "<line x1=\"" << num(px(xa)) << "\" y1=\"" << num(py(fit->intercept + fit->slope * xa))
           << "\" x2=\"" << num(px(xb)) << "\" y2=\"" << num(py(fit->intercept + fit->slope * xb))
           << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << dash << "/>\n";
      }
    }
    for (const auto& p : s.points)
      os << "<circle cx=\"" << num(px(std::log10(p.compute()))) << "\" cy=\""
         << num(py(p.average)) << "\" r=\"4\" fill=\"" << color << "\"/>\n";
    // legend
    const double ly = mt + 16 * static_cast<double>(si);
    os << "<rect x=\"" << num(width - mr + 14) << "\" y=\"" << num(ly) << "\" width=\"10\""
       << " height=\"10\" fill=\"" << color << "\"/>\n";
    os << "<text x=\"" << num(width - mr + 30) << "\" y=\"" << num(ly + 9)
       << "\" font-size=\"12\">" << s.label << (internal ? "" : " (ext)") << "</text>\n";
  }
  os << "<text x=\"" << num(ml) << "\" y=\"" << num(mt - 10) << "\" font-size=\"13\">scaling "
     << (mode == "fit" ? "trend (least-squares, not a law)" : "trend (connected points)")
     << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string dominance_markdown(const std::vector<RunPoint>& points) {
  std::ostringstream os;
  os << "| model | dataset | compute | avg | dominated | dominated by |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const RunPoint& p : by_average_desc(points)) {
    const DominanceReport rep = flag_suboptimal(p, points);
    os << "| " << p.label << " | " << p.dataset << " | " << format_sig_figs(p.compute(), 3)
       << " | " << num(p.average, "%.2f") << " | " << (rep.flagged ? "YES" : "no") << " | ";
    for (size_t i = 0; i < rep.dominators.size(); ++i) {
      const RunPoint& d = rep.dominators[i];
      os << (i ? "; " : "") << d.label << " (" << d.dataset << " " << d.tokens_label << ")";
    }
    if (rep.dominators.empty()) os << "-";
    os << " |\n";
  }
  return os.str();
}

std::string dominance_csv(const std::vector<RunPoint>& points) {
  std::ostringstream os;
  os << "label,dataset,tokens_label,compute,average,flagged,dominators\n";
  for (const RunPoint& p : by_average_desc(points)) {
    const DominanceReport rep = flag_suboptimal(p, points);
    os << p.label << ',' << p.dataset << ',' << p.tokens_label << ','
       << num(p.compute(), "%.6g") << ',' << num(p.average, "%.6g") << ','
       << (rep.flagged ? 1 : 0) << ',';
    for (size_t i = 0; i < rep.dominators.size(); ++i)
      os << (i ? ";" : "") << rep.dominators[i].label << "/" << rep.dominators[i].dataset
         << "/" << rep.dominators[i].tokens_label;
    os << '\n';
  }
  return os.str();
}

}  // namespace refbase
