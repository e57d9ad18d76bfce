#pragma once

#include <optional>
#include <string>
#include <vector>

namespace refbase {

// Training-cost arithmetic under the 6-FLOPs-per-parameter-per-token rule.
// N is total parameters (embedding included). Measured per-GPU TFLOPS are
// hardware observations and are never recomputed from 6N.

double flops_per_token(double params_n);                  // 6N
double total_compute(double params_n, double tokens_d);   // 6ND
double run_time_hours(double tokens_d, double gpu_count, double tokens_per_gpu_s);
double gpu_hours(double run_hours, double gpu_count);

// Rounds to `figs` significant figures (used to compare against printed
// table values).
double round_sig_figs(double x, int figs);
std::string format_sig_figs(double x, int figs);

struct ComputeRecord {
  std::string label;
  double params_n = 0;
  double tokens_d = 0;
  double flops_per_token = 0;
  double total_flops = 0;
  // measured throughput, stored as opaque observations
  std::optional<double> tokens_per_gpu_s;
  std::optional<double> gpu_count;
  std::optional<double> run_hours;
};

ComputeRecord make_record(const std::string& label, double params_n, double tokens_d,
                          std::optional<double> tokens_per_gpu_s = {},
                          std::optional<double> gpu_count = {});

std::string ledger_csv(const std::vector<ComputeRecord>& records);
std::string ledger_markdown(const std::vector<ComputeRecord>& records);

}  // namespace refbase
