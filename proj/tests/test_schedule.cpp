#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "schedule/schedule.h"
#include "core/error.h"

using namespace refbase;

namespace {

ScheduleSpec wsd_300b() {
  return plan_from_budget(300e9, 4'128'768, 4e-3, 25000, ScheduleKind::wsd);
}

}  // namespace

TEST_CASE("budget planning reproduces the published hyperparameter rows") {
  // wsd rows: (budget, gbs, iters, cooldown)
  struct Row {
    double budget;
    int64_t gbs, iters, cooldown;
  };
  const Row wsd_rows[] = {
      {50e9, 2'654'208, 18839, 3767},    // 1296 x 2048
      {50e9, 4'194'304, 11921, 2384},    // 256 x 16384
      {300e9, 2'097'152, 143052, 28610}, // 1024 x 2048
      {300e9, 4'128'768, 72661, 14532},  // 1008 x 4096
      {1e12, 4'128'768, 242204, 48440},
  };
  for (const Row& row : wsd_rows) {
    CAPTURE(row.budget);
    CAPTURE(row.gbs);
    const ScheduleSpec spec = plan_from_budget(row.budget, row.gbs, 4e-3, 1000);
    CHECK(spec.total_iters == row.iters);
    CHECK(spec.cooldown_iters == row.cooldown);
  }
  // cosine rows share the iteration arithmetic
  const Row cosine_rows[] = {
      {50e9, 2'654'208, 18839, 0},
      {50e9, 4'030'464, 12406, 0},  // 1968 x 2048
      {300e9, 2'097'152, 143052, 0},
  };
  for (const Row& row : cosine_rows) {
    const ScheduleSpec spec =
        plan_from_budget(row.budget, row.gbs, 3e-3, 1000, ScheduleKind::cosine);
    CHECK(spec.total_iters == row.iters);
    CHECK(spec.cooldown_iters == 0);
  }
}

TEST_CASE("wsd lr curve hits the documented anchors") {
  const ScheduleSpec spec = wsd_300b();
  CHECK(spec.warmup_iters == 25000);
  CHECK(lr_at(spec, 0) == 0.0);
  CHECK(lr_at(spec, 25000) == 4e-3);                       // warmup end = peak
  CHECK(lr_at(spec, spec.total_iters) == 0.0);             // cooldown endpoint
  CHECK(lr_at(spec, spec.total_iters - spec.cooldown_iters / 2) ==
        doctest::Approx(2e-3).epsilon(1e-4));              // linear midpoint
  CHECK(lr_at(spec, 12500) == doctest::Approx(2e-3));      // warmup midpoint
  CHECK_THROWS_AS(lr_at(spec, -1), ConfigError);
  CHECK_THROWS_AS(lr_at(spec, spec.total_iters + 1), ConfigError);
}

TEST_CASE("piecewise-linear bounds hold across the whole wsd curve") {
  const ScheduleSpec spec = wsd_300b();
  const double max_delta =
      spec.peak_lr / static_cast<double>(std::min(spec.warmup_iters, spec.cooldown_iters));
  const int64_t stable_lo = spec.warmup_iters;
  const int64_t stable_hi = spec.total_iters - spec.cooldown_iters;
  double prev = lr_at(spec, 0);
  for (int64_t k = 1; k <= 10000; ++k) {
    const int64_t i = k * spec.total_iters / 10000;
    const double lr = lr_at(spec, i);
    CHECK(lr <= spec.peak_lr + 1e-15);
    CHECK(lr >= 0.0);
    // peak is attained exactly on the stable plateau
    if (i >= stable_lo && i <= stable_hi) CHECK(lr == spec.peak_lr);
    if (i < stable_lo || i > stable_hi) CHECK(lr < spec.peak_lr);
    (void)prev;
    prev = lr;
  }
  // adjacent-step continuity at the phase boundaries
  for (int64_t i : {spec.warmup_iters - 1, spec.warmup_iters, stable_hi, stable_hi + 1}) {
    CHECK(std::fabs(lr_at(spec, i + 1) - lr_at(spec, i)) <= max_delta + 1e-15);
  }
}

TEST_CASE("cosine decays from peak to the floor fraction") {
  ScheduleSpec spec = plan_from_budget(50e9, 2'654'208, 3e-3, 6000, ScheduleKind::cosine);
  CHECK(lr_at(spec, 6000) == 3e-3);
  CHECK(lr_at(spec, spec.total_iters) == doctest::Approx(3e-4).epsilon(1e-9));
  const int64_t mid = (spec.total_iters + 6000) / 2;
  CHECK(lr_at(spec, mid) ==
        doctest::Approx(0.5 * (3e-3 + 3e-4)).epsilon(1e-3));  // halfway point of the cosine
}

TEST_CASE("cooldown branching matches an independent plan for the same budget") {
  // a 1T-budget stable run branched where the 300B plan's stable phase ends
  const ScheduleSpec long_run = plan_from_budget(1e12, 4'128'768, 4e-3, 25000);
  const ScheduleSpec direct = wsd_300b();
  const int64_t branch = direct.total_iters - direct.cooldown_iters;  // 58129
  const ScheduleSpec branched = cooldown_branch(long_run, branch);
  CHECK(branched.total_iters == direct.total_iters);
  CHECK(branched.cooldown_iters == direct.cooldown_iters);
  CHECK(branched.peak_lr == direct.peak_lr);
}

TEST_CASE("branching at the warmup boundary keeps the 20%-of-total rule") {
  const ScheduleSpec spec = wsd_300b();
  const ScheduleSpec branched = cooldown_branch(spec, spec.warmup_iters);
  // stable phase ends at the branch point; cooldown is 20% of the new total
  CHECK(branched.total_iters - branched.cooldown_iters == spec.warmup_iters);
  CHECK(branched.cooldown_iters == branched.total_iters / 5);
}

TEST_CASE("branching inside warmup or cooldown is an error") {
  const ScheduleSpec spec = wsd_300b();
  CHECK_THROWS_WITH_AS(cooldown_branch(spec, spec.warmup_iters - 1),
                       doctest::Contains("warmup"), ConfigError);
  const int64_t in_cooldown = spec.total_iters - spec.cooldown_iters + 1;
  CHECK_THROWS_WITH_AS(cooldown_branch(spec, in_cooldown), doctest::Contains("cooldown"),
                       ConfigError);
}

TEST_CASE("schedule specs round-trip through json") {
  const ScheduleSpec spec = wsd_300b();
  const ScheduleSpec back = ScheduleSpec::from_json(spec.to_json());
  CHECK(back.kind == spec.kind);
  CHECK(back.peak_lr == spec.peak_lr);
  CHECK(back.total_iters == spec.total_iters);
  CHECK(back.cooldown_iters == spec.cooldown_iters);
  CHECK(back.to_json() == spec.to_json());
}

TEST_CASE("lr sequences recompute identically from any split point") {
  const ScheduleSpec spec = plan_from_budget(2e6, 2048, 1e-3, 100);
  std::vector<double> whole, halves;
  for (int64_t i = 0; i <= spec.total_iters; ++i) whole.push_back(lr_at(spec, i));
  for (int64_t i = 0; i <= spec.total_iters / 2; ++i) halves.push_back(lr_at(spec, i));
  for (int64_t i = spec.total_iters / 2 + 1; i <= spec.total_iters; ++i)
    halves.push_back(lr_at(spec, i));
  CHECK(whole == halves);
}

TEST_CASE("validation rejects inconsistent geometry") {
  ScheduleSpec bad;
  bad.kind = ScheduleKind::wsd;
  bad.peak_lr = 1e-3;
  bad.total_iters = 100;
  bad.warmup_iters = 60;
  bad.cooldown_iters = 50;
  CHECK_THROWS_WITH_AS(validate(bad), doctest::Contains("cooldown"), ConfigError);
  CHECK_THROWS_AS(plan_from_budget(1000, 10, 1e-3, 200), ConfigError);  // warmup >= total
}

TEST_CASE("lr curve csv is deterministic and covers the endpoints") {
  const ScheduleSpec spec = plan_from_budget(1e5, 100, 2e-3, 100);
  const std::string csv = lr_curve_csv(spec, 97);
  CHECK(csv == lr_curve_csv(spec, 97));
  CHECK(csv.find("iteration,lr\n0,0\n") == 0);
  CHECK(csv.find("\n1000,0\n") != std::string::npos);
}
