#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "data/packer.h"
#include "train/checkpoint.h"

namespace refbase {

struct TrainRunOptions {
  std::string out_dir;            // empty: no checkpoints, no log
  int64_t checkpoint_every = 0;   // 0: every 10% of total_iters
  int64_t micro_batch_rows = 0;   // 0: whole batch per step
  bool write_log = true;
  int64_t stop_after = -1;        // iteration to pause at (-1: run to total)
};

struct StepStats {
  double loss = 0;
  double lr = 0;
  double grad_norm = 0;
};

// One optimizer step at state.iteration. Gradient accumulation over
// micro-batches matches the monolithic batch up to summation order (exact
// only with dropout disabled, since mask draws depend on op shapes).
StepStats train_step(TrainState& state, const BatchStream& stream, int64_t micro_batch_rows = 0);

// Runs from state.iteration to schedule.total_iters (or opts.stop_after),
// writing iteration-numbered checkpoints plus ckpt-final.bin and a JSONL
// log. Aborts with NumericFault (plus iteration/lr/grad-norm diagnostics)
// on non-finite loss; never skips a step.
std::vector<std::string> train(TrainState& state, const BatchStream& stream,
                               const TrainRunOptions& opts);

// Mean cross-entropy (dropout off, no gradients) over the first n_batches
// of a stream.
double eval_loss(const Model<float>& model, const BatchStream& stream, int64_t n_batches);

// Fraction of positions whose argmax logit equals the target. A simple
// higher-is-better score for ablation reports.
double eval_top1(const Model<float>& model, const BatchStream& stream, int64_t n_batches);

// ------------------------------------------------------------- ablation

struct AblationArm {
  std::string name;
  bool biases = true;
  bool qk_norm = true;
  double dropout_p = 0.1;
};

// Arms for a set of toggles: a baseline plus one arm per named flag
// ("biases", "qk_norm", "dropout") with that feature switched off.
std::vector<AblationArm> ablation_arms(const ModelConfig& base,
                                       const std::vector<std::string>& flags);

struct AblationResult {
  AblationArm arm;
  int64_t param_count = 0;
  std::vector<float> loss_curve;
  double final_eval_loss = 0;
  std::map<std::string, double> scores;  // per-task (or holdout_top1)
};

using ArmScoreFn = std::function<std::map<std::string, double>(const Model<float>&)>;

// Trains every arm with the same seed and data stream and writes
// loss_curves.csv plus runpoints.jsonl (RunPoint schema, provenance
// "internal") under out_dir. score_fn defaults to holdout top-1 accuracy.
std::vector<AblationResult> run_ablation(const ModelConfig& base, const ScheduleSpec& schedule,
                                         const OptimConfig& optim,
                                         const std::vector<TokenShard>& shards,
                                         int64_t global_batch_tokens, uint64_t seed,
                                         const std::vector<std::string>& flags,
                                         const std::string& out_dir,
                                         const ArmScoreFn& score_fn = {});

}  // namespace refbase
