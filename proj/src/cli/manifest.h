#pragma once

#include <cstdint>
#include <string>

#include "model/config.h"
#include "schedule/schedule.h"
#include "train/optim.h"

namespace refbase {

// Everything a training run needs, in one reproducible file. Relative paths
// resolve against the manifest's directory; the REFBASE_OUT_ROOT environment
// variable overrides the output root; command-line flags win over both.
struct RunManifest {
  std::string run_id;
  ModelConfig model;
  ScheduleSpec schedule;
  OptimConfig optim;
  std::string corpus_manifest;  // path
  double holdout_fraction = 0.0;
  uint64_t seed = 0;
  std::string out_dir;
  int64_t global_batch_tokens = 0;
  int64_t micro_batch_rows = 0;
  int64_t checkpoint_every = 0;

  void save(const std::string& path) const;
  static RunManifest load(const std::string& path);

  // Validates cross-field constraints (batch divisibility, budget sanity).
  void check() const;
};

}  // namespace refbase
