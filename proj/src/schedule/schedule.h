#pragma once

#include <cstdint>
#include <string>

namespace refbase {

enum class ScheduleKind { wsd, cosine };

std::string to_string(ScheduleKind k);
ScheduleKind schedule_kind_from_string(const std::string& s);

// Learning-rate schedule geometry in iterations.
//
// wsd: linear ramp 0 -> peak over [0, warmup], constant peak over
// [warmup, total - cooldown], linear decay peak -> 0 over the final
// cooldown_iters. cosine: same warmup, then cosine decay from peak to
// min_lr_fraction * peak at total_iters.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::wsd;
  double peak_lr = 0.0;
  int64_t warmup_iters = 0;
  int64_t total_iters = 0;
  int64_t cooldown_iters = 0;     // wsd only
  double min_lr_fraction = 0.1;   // cosine only

  std::string to_json() const;
  static ScheduleSpec from_json(const std::string& text);
};

// Throws ConfigError naming the violated constraint.
void validate(const ScheduleSpec& spec);

// Learning rate at an iteration in [0, total_iters].
double lr_at(const ScheduleSpec& spec, int64_t iteration);

// total_iters = ceil(token_budget / global_batch_tokens);
// wsd cooldown = floor(0.2 * total_iters).
ScheduleSpec plan_from_budget(double token_budget, int64_t global_batch_tokens,
                              double peak_lr, int64_t warmup_iters,
                              ScheduleKind kind = ScheduleKind::wsd);

// Spec for a run annealed from an intermediate checkpoint of `spec`'s stable
// phase: the stable phase ends at branch_iteration, the cooldown keeps the
// 20%-of-total rule (smallest total consistent with
// total = branch + floor(0.2 * total)).
ScheduleSpec cooldown_branch(const ScheduleSpec& spec, int64_t branch_iteration);

// "iteration,lr\n" rows over [0, total] at the given stride (always
// including the final iteration).
std::string lr_curve_csv(const ScheduleSpec& spec, int64_t stride = 1);

}  // namespace refbase
