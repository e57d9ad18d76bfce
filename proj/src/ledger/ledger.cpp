#include "ledger/ledger.h"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "core/error.h"

namespace refbase {

double flops_per_token(double params_n) {
  if (params_n <= 0) throw ConfigError("flops_per_token: N must be > 0");
  return 6.0 * params_n;
}

double total_compute(double params_n, double tokens_d) {
  if (params_n <= 0 || tokens_d <= 0)
    throw ConfigError("total_compute: N and D must be > 0");
  return 6.0 * params_n * tokens_d;
}

double run_time_hours(double tokens_d, double gpu_count, double tokens_per_gpu_s) {
  if (tokens_d < 0) throw ConfigError("run_time_hours: D must be >= 0");
  if (gpu_count <= 0 || tokens_per_gpu_s <= 0)
    throw ConfigError("run_time_hours: gpu_count and throughput must be > 0");
  return tokens_d / (gpu_count * tokens_per_gpu_s) / 3600.0;
}

double gpu_hours(double run_hours, double gpu_count) {
  if (run_hours < 0 || gpu_count <= 0)
    throw ConfigError("gpu_hours: inputs must be positive");
  return run_hours * gpu_count;
}

double round_sig_figs(double x, int figs) {
  if (x == 0) return 0;
  const double mag = std::pow(10.0, figs - 1 - static_cast<int>(std::floor(std::log10(std::fabs(x)))));
  return std::round(x * mag) / mag;
}

std::string format_sig_figs(double x, int figs) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", figs, x);
  return buf;
}

ComputeRecord make_record(const std::string& label, double params_n, double tokens_d,
                          std::optional<double> tokens_per_gpu_s,
                          std::optional<double> gpu_count) {
  ComputeRecord r;
  r.label = label;
  r.params_n = params_n;
  r.tokens_d = tokens_d;
  r.flops_per_token = flops_per_token(params_n);
  r.total_flops = total_compute(params_n, tokens_d);
  r.tokens_per_gpu_s = tokens_per_gpu_s;
  r.gpu_count = gpu_count;
  if (tokens_per_gpu_s && gpu_count)
    r.run_hours = run_time_hours(tokens_d, *gpu_count, *tokens_per_gpu_s);
  return r;
}

namespace {

std::string cell(double v) { return format_sig_figs(v, 4); }

}  // namespace

std::string ledger_csv(const std::vector<ComputeRecord>& records) {
  std::ostringstream os;
  os << "label,params_n,tokens_d,flops_per_token,total_flops,gpu_count,tokens_per_gpu_s,run_hours,gpu_hours\n";
  for (const auto& r : records) {
    os << r.label << ',' << cell(r.params_n) << ',' << cell(r.tokens_d) << ','
       << cell(r.flops_per_token) << ',' << cell(r.total_flops) << ',';
    os << (r.gpu_count ? cell(*r.gpu_count) : "") << ',';
    os << (r.tokens_per_gpu_s ? cell(*r.tokens_per_gpu_s) : "") << ',';
    os << (r.run_hours ? cell(*r.run_hours) : "") << ',';
    os << (r.run_hours && r.gpu_count ? cell(gpu_hours(*r.run_hours, *r.gpu_count)) : "");
    os << '\n';
  }
  return os.str();
}

std::string ledger_markdown(const std::vector<ComputeRecord>& records) {
  std::ostringstream os;
  os << "| label | params N | tokens D | FLOPs/token (6N) | total FLOPs (6ND) | run h | GPU h |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : records) {
    os << "| " << r.label << " | " << cell(r.params_n) << " | " << cell(r.tokens_d) << " | "
       << format_sig_figs(r.flops_per_token, 2) << " | " << format_sig_figs(r.total_flops, 3)
       << " | " << (r.run_hours ? cell(*r.run_hours) : "-") << " | "
       << (r.run_hours && r.gpu_count ? cell(gpu_hours(*r.run_hours, *r.gpu_count)) : "-")
       << " |\n";
  }
  return os.str();
}

}  // namespace refbase
