#include "schedule/schedule.h"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "core/error.h"

namespace refbase {

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::wsd ? "wsd" : "cosine";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "wsd") return ScheduleKind::wsd;
  if (s == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind '" + s + "' (expected wsd or cosine)");
}

void validate(const ScheduleSpec& spec) {
  if (spec.peak_lr <= 0) throw ConfigError("schedule: peak_lr must be > 0");
  if (spec.total_iters <= 0) throw ConfigError("schedule: total_iters must be > 0");
  if (spec.warmup_iters < 0) throw ConfigError("schedule: warmup_iters must be >= 0");
  if (spec.warmup_iters >= spec.total_iters)
    throw ConfigError("schedule: warmup_iters (" + std::to_string(spec.warmup_iters) +
                      ") must be below total_iters (" + std::to_string(spec.total_iters) + ")");
  if (spec.kind == ScheduleKind::wsd) {
    if (spec.cooldown_iters < 0) throw ConfigError("schedule: cooldown_iters must be >= 0");
    if (spec.warmup_iters + spec.cooldown_iters > spec.total_iters)
      throw ConfigError("schedule: warmup (" + std::to_string(spec.warmup_iters) +
                        ") + cooldown (" + std::to_string(spec.cooldown_iters) +
                        ") exceeds total_iters (" + std::to_string(spec.total_iters) + ")");
  } else {
    if (spec.min_lr_fraction < 0 || spec.min_lr_fraction > 1)
      throw ConfigError("schedule: min_lr_fraction must be in [0,1]");
  }
}

double lr_at(const ScheduleSpec& spec, int64_t iteration) {
  validate(spec);
  if (iteration < 0 || iteration > spec.total_iters)
    throw ConfigError("lr_at: iteration " + std::to_string(iteration) +
                      " outside [0," + std::to_string(spec.total_iters) + "]");
  if (iteration < spec.warmup_iters)
    return spec.peak_lr * static_cast<double>(iteration) /
           static_cast<double>(spec.warmup_iters);
  if (spec.kind == ScheduleKind::wsd) {
    const int64_t decay_start = spec.total_iters - spec.cooldown_iters;
    if (iteration <= decay_start) return spec.peak_lr;
    return spec.peak_lr * static_cast<double>(spec.total_iters - iteration) /
           static_cast<double>(spec.cooldown_iters);
  }
  const double min_lr = spec.min_lr_fraction * spec.peak_lr;
  const double t = static_cast<double>(iteration - spec.warmup_iters) /
                   static_cast<double>(spec.total_iters - spec.warmup_iters);
  return min_lr + 0.5 * (spec.peak_lr - min_lr) * (1.0 + std::cos(M_PI * t));
}

ScheduleSpec plan_from_budget(double token_budget, int64_t global_batch_tokens,
                              double peak_lr, int64_t warmup_iters, ScheduleKind kind) {
  if (token_budget <= 0) throw ConfigError("plan: token_budget must be > 0");
  if (global_batch_tokens <= 0) throw ConfigError("plan: global_batch_tokens must be > 0");
  ScheduleSpec spec;
  spec.kind = kind;
  spec.peak_lr = peak_lr;
  spec.warmup_iters = warmup_iters;
  spec.total_iters = static_cast<int64_t>(
      std::ceil(token_budget / static_cast<double>(global_batch_tokens)));
  if (kind == ScheduleKind::wsd)
    spec.cooldown_iters = static_cast<int64_t>(
        std::floor(0.2 * static_cast<double>(spec.total_iters)));
  validate(spec);
  return spec;
}

ScheduleSpec cooldown_branch(const ScheduleSpec& spec, int64_t branch_iteration) {
  validate(spec);
  if (spec.kind != ScheduleKind::wsd)
    throw ConfigError("cooldown_branch: only wsd schedules can be branched");
  const int64_t stable_end = spec.total_iters - spec.cooldown_iters;
  if (branch_iteration < spec.warmup_iters)
    throw ConfigError("cooldown_branch: iteration " + std::to_string(branch_iteration) +
                      " is inside warmup (ends at " + std::to_string(spec.warmup_iters) + ")");
  if (branch_iteration > stable_end)
    throw ConfigError("cooldown_branch: iteration " + std::to_string(branch_iteration) +
                      " is inside the cooldown (stable phase ends at " +
                      std::to_string(stable_end) + ")");
  // smallest total with total == branch + floor(0.2 * total); exists because
  // branch + floor(0.2*t) - t steps down by at most 1 per unit of t
  const int64_t lo = branch_iteration;
  const int64_t hi = branch_iteration + branch_iteration / 3 + 8;
  int64_t total = -1;
  for (int64_t t = lo; t <= hi; ++t) {
    if (branch_iteration + t / 5 == t) {  // floor(0.2*t) == t/5 for integer t
      total = t;
      break;
    }
  }
  if (total < 0)
    throw ConfigError("cooldown_branch: no consistent cooldown for branch iteration " +
                      std::to_string(branch_iteration));
  ScheduleSpec out = spec;
  out.total_iters = total;
  out.cooldown_iters = total - branch_iteration;
  validate(out);
  return out;
}

std::string lr_curve_csv(const ScheduleSpec& spec, int64_t stride) {
  validate(spec);
  if (stride <= 0) throw ConfigError("lr_curve_csv: stride must be > 0");
  std::ostringstream os;
  os << "iteration,lr\n";
  char buf[64];
  for (int64_t i = 0; i <= spec.total_iters; i += stride) {
    std::snprintf(buf, sizeof(buf), "%lld,%.10g\n", static_cast<long long>(i), lr_at(spec, i));
    os << buf;
  }
  if ((spec.total_iters % stride) != 0) {
    std::snprintf(buf, sizeof(buf), "%lld,%.10g\n",
                  static_cast<long long>(spec.total_iters), lr_at(spec, spec.total_iters));
    os << buf;
  }
  return os.str();
}

std::string ScheduleSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = refbase::to_string(kind);
  j["peak_lr"] = peak_lr;
  j["warmup_iters"] = warmup_iters;
  j["total_iters"] = total_iters;
  if (kind == ScheduleKind::wsd) j["cooldown_iters"] = cooldown_iters;
  if (kind == ScheduleKind::cosine) j["min_lr_fraction"] = min_lr_fraction;
  return j.dump();
}

ScheduleSpec ScheduleSpec::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule json: ") + e.what());
  }
  ScheduleSpec spec;
  try {
    spec.kind = schedule_kind_from_string(j.at("kind").get<std::string>());
    spec.peak_lr = j.at("peak_lr").get<double>();
    spec.warmup_iters = j.at("warmup_iters").get<int64_t>();
    spec.total_iters = j.at("total_iters").get<int64_t>();
    if (j.contains("cooldown_iters")) spec.cooldown_iters = j.at("cooldown_iters").get<int64_t>();
    if (j.contains("min_lr_fraction")) spec.min_lr_fraction = j.at("min_lr_fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule json: ") + e.what());
  }
  validate(spec);
  return spec;
}

}  // namespace refbase
