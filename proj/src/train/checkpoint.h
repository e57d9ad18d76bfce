#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.h"
#include "model/config.h"
#include "model/model.h"
#include "schedule/schedule.h"
#include "train/optim.h"

namespace refbase {

// Full training state. Every field round-trips bit-exactly through the
// checkpoint format; dropout/data randomness is derived functionally from
// (seed, iteration), so (seed, iteration) is the complete rng state.
struct TrainState {
  ModelConfig model_cfg;
  ScheduleSpec schedule;
  OptimConfig optim;
  uint64_t seed = 0;
  int64_t iteration = 0;
  int64_t tokens_seen = 0;
  int64_t global_batch_tokens = 0;
  std::string run_id;
  Model<float> model;
  std::vector<Tensor<float>> opt_m, opt_v;
  std::vector<float> loss_history;
};

TrainState init_train_state(const ModelConfig& model_cfg, const ScheduleSpec& schedule,
                            const OptimConfig& optim, int64_t global_batch_tokens,
                            uint64_t seed, const std::string& run_id = "run");

// Self-describing binary: magic, version, config JSON, named tensors
// (name, dtype, shape, raw little-endian data), trailing CRC. Writes are
// atomic (temp + rename).
void save_checkpoint(const TrainState& state, const std::string& path);

TrainState load_checkpoint(const std::string& path);

// As load_checkpoint, but fails with a ConfigError naming the first
// mismatched tensor if the stored model does not match `expected`.
TrainState load_checkpoint(const std::string& path, const ModelConfig& expected);

}  // namespace refbase
