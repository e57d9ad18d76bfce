#include "train/trainer.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "core/binio.h"
#include "core/error.h"
#include "core/rng.h"
#include "train/optim.h"

namespace refbase {

namespace {

constexpr uint64_t kDropoutStream = 0xD809;

TokenTensor rows_of(const TokenTensor& t, int64_t begin, int64_t end) {
  const int64_t cols = t.shape[1];
  std::vector<int32_t> ids(t.ids.begin() + begin * cols, t.ids.begin() + end * cols);
  return TokenTensor({end - begin, cols}, std::move(ids));
}

std::string checkpoint_name(int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt-%08lld.bin", static_cast<long long>(iteration));
  return buf;
}

}  // namespace

StepStats train_step(TrainState& state, const BatchStream& stream, int64_t micro_batch_rows) {
  if (stream.global_batch_tokens() != state.global_batch_tokens)
    throw ConfigError("train: stream provides " + std::to_string(stream.global_batch_tokens()) +
                      " tokens per batch, state expects " +
                      std::to_string(state.global_batch_tokens));
  const int64_t rows = stream.rows();
  const int64_t micro = micro_batch_rows > 0 ? micro_batch_rows : rows;
  if (rows % micro != 0)
    throw ConfigError("train: batch rows (" + std::to_string(rows) +
                      ") not divisible by micro-batch rows (" + std::to_string(micro) + ")");
  const int64_t n_micro = rows / micro;

  const double lr = lr_at(state.schedule, state.iteration);
  const Batch batch = stream.batch(state.iteration);
  Rng dropout_rng = Rng::from_stream(derive_seed(state.seed, kDropoutStream),
                                     static_cast<uint64_t>(state.iteration));

  AdamW optimizer(state.optim, state.model.specs(), std::move(state.opt_m), std::move(state.opt_v));
  std::vector<std::vector<float>> grads;
  for (const auto& p : state.model.params())
    grads.emplace_back(static_cast<size_t>(p.size()), 0.0f);

  double loss_total = 0;
  StepStats stats;
  try {
    for (int64_t mb = 0; mb < n_micro; ++mb) {
      Tape<float> tape;
      auto bound = state.model.bind(tape);
      TokenTensor inputs = rows_of(batch.inputs, mb * micro, (mb + 1) * micro);
      TokenTensor targets = rows_of(batch.targets, mb * micro, (mb + 1) * micro);
      auto logits = state.model.forward(tape, bound, inputs, /*train=*/true, &dropout_rng);
      auto loss = state.model.loss(tape, logits, targets);
      // equal micro sizes: mean of means equals the monolithic mean
      auto scaled = tape.scale(loss, static_cast<float>(1.0 / static_cast<double>(n_micro)));
      loss_total += static_cast<double>(tape.value(scaled).item());
      tape.backward(scaled);
      for (size_t pi = 0; pi < grads.size(); ++pi) {
        if (!tape.has_grad(bound.ids[pi])) continue;
        const std::vector<float>& g = tape.grad(bound.ids[pi]);
        for (size_t i = 0; i < g.size(); ++i) grads[pi][i] += g[i];
      }
    }
    stats.grad_norm = optimizer.clip_gradients(grads);
    optimizer.update(state.model.mutable_params(), grads, lr, state.iteration + 1);
  } catch (const NumericFault& e) {
    state.opt_m = optimizer.m();
    state.opt_v = optimizer.v();
    throw NumericFault("training aborted at iteration " + std::to_string(state.iteration) +
                       " (lr " + std::to_string(lr) + ", grad_norm " +
                       std::to_string(stats.grad_norm) + "): " + e.what());
  }
  state.opt_m = optimizer.m();
  state.opt_v = optimizer.v();

  stats.loss = loss_total;
  stats.lr = lr;
  state.loss_history.push_back(static_cast<float>(loss_total));
  state.iteration += 1;
  state.tokens_seen = state.iteration * state.global_batch_tokens;
  return stats;
}

std::vector<std::string> train(TrainState& state, const BatchStream& stream,
                               const TrainRunOptions& opts) {
  const int64_t total = state.schedule.total_iters;
  const int64_t until = opts.stop_after >= 0 ? std::min(opts.stop_after, total) : total;
  if (state.iteration > until)
    throw ConfigError("train: state is already past iteration " + std::to_string(until));
  int64_t every = opts.checkpoint_every > 0 ? opts.checkpoint_every
                                            : std::max<int64_t>(1, total / 10);

  std::vector<std::string> written;
  std::ofstream log;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    if (opts.write_log) {
      log.open(std::filesystem::path(opts.out_dir) / "train_log.jsonl", std::ios::app);
      if (!log) throw IoError("train: cannot open log in " + opts.out_dir);
    }
  }
  auto save = [&](const std::string& name) {
    if (opts.out_dir.empty()) return;
    const std::string path = (std::filesystem::path(opts.out_dir) / name).string();
    save_checkpoint(state, path);
    written.push_back(path);
  };

  if (state.iteration == 0 && until == 0) save(checkpoint_name(0));

  using Clock = std::chrono::steady_clock;
  while (state.iteration < until) {
    const auto t0 = Clock::now();
    StepStats s = train_step(state, stream, opts.micro_batch_rows);
    const double wall_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (log.is_open()) {
      nlohmann::json j;
      j["iteration"] = state.iteration - 1;
      j["lr"] = s.lr;
      j["loss"] = s.loss;
      j["grad_norm"] = s.grad_norm;
      j["tokens_seen"] = state.tokens_seen;
      j["wall_ms"] = wall_ms;
      log << j.dump() << "\n";
      log.flush();
    }
    if (state.iteration % every == 0 && state.iteration < total) save(checkpoint_name(state.iteration));
  }
  if (state.iteration == total) {
    save(checkpoint_name(total));
    save("ckpt-final.bin");
  }
  return written;
}

double eval_loss(const Model<float>& model, const BatchStream& stream, int64_t n_batches) {
  if (n_batches <= 0) throw ConfigError("eval_loss: n_batches must be > 0");
  double total = 0;
  for (int64_t b = 0; b < n_batches; ++b) {
    const Batch batch = stream.batch(b);
    Tape<float> tape;
    auto bound = model.bind(tape);
    auto logits = model.forward(tape, bound, batch.inputs, /*train=*/false);
    total += static_cast<double>(tape.value(model.loss(tape, logits, batch.targets)).item());
  }
  return total / static_cast<double>(n_batches);
}

double eval_top1(const Model<float>& model, const BatchStream& stream, int64_t n_batches) {
  if (n_batches <= 0) throw ConfigError("eval_top1: n_batches must be > 0");
  int64_t hits = 0, total = 0;
  for (int64_t b = 0; b < n_batches; ++b) {
    const Batch batch = stream.batch(b);
    Tape<float> tape;
    auto bound = model.bind(tape);
    const Tensor<float>& logits =
        tape.value(model.forward(tape, bound, batch.inputs, /*train=*/false));
    const int64_t v = logits.shape().back();
    const int64_t n = logits.size() / v;
    for (int64_t r = 0; r < n; ++r) {
      const float* row = logits.data() + r * v;
      int64_t best = 0;
      for (int64_t j = 1; j < v; ++j)
        if (row[j] > row[best]) best = j;
      hits += best == batch.targets.ids[static_cast<size_t>(r)];
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<AblationArm> ablation_arms(const ModelConfig& base,
                                       const std::vector<std::string>& flags) {
  AblationArm baseline{"baseline", base.biases_enabled, base.qk_norm_enabled, base.dropout_p};
  std::vector<AblationArm> arms{baseline};
  for (const auto& f : flags) {
    AblationArm arm = baseline;
    if (f == "biases") {
      arm.biases = false;
      arm.name = "no-biases";
    } else if (f == "qk_norm") {
      arm.qk_norm = false;
      arm.name = "no-qk-norm";
    } else if (f == "dropout") {
      arm.dropout_p = 0.0;
      arm.name = "no-dropout";
    } else {
      throw ConfigError("ablate: unknown flag '" + f + "' (biases, qk_norm, dropout)");
    }
    arms.push_back(arm);
  }
  return arms;
}

std::vector<AblationResult> run_ablation(const ModelConfig& base, const ScheduleSpec& schedule,
                                         const OptimConfig& optim,
                                         const std::vector<TokenShard>& shards,
                                         int64_t global_batch_tokens, uint64_t seed,
                                         const std::vector<std::string>& flags,
                                         const std::string& out_dir,
                                         const ArmScoreFn& score_fn) {
  std::filesystem::create_directories(out_dir);
  std::vector<AblationResult> results;
  for (const AblationArm& arm : ablation_arms(base, flags)) {
    ModelConfig cfg = base;
    cfg.biases_enabled = arm.biases;
    cfg.qk_norm_enabled = arm.qk_norm;
    cfg.dropout_p = arm.dropout_p;
    TrainState state = init_train_state(cfg, schedule, optim, global_batch_tokens, seed,
                                        "ablate-" + arm.name);
    BatchStream stream(shards, cfg.context_length, global_batch_tokens, seed);
    TrainRunOptions opts;
    opts.write_log = false;
    train(state, stream, opts);

    AblationResult res;
    res.arm = arm;
    res.param_count = state.model.param_count();
    res.loss_curve = state.loss_history;
    res.final_eval_loss = eval_loss(state.model, stream, 1);
    res.scores = score_fn ? score_fn(state.model)
                          : std::map<std::string, double>{
                                {"holdout_top1", eval_top1(state.model, stream, 1)}};
    results.push_back(std::move(res));
  }

  // loss_curves.csv: one column per arm
  std::string csv = "iteration";
  for (const auto& r : results) csv += "," + r.arm.name;
  csv += "\n";
  size_t iters = results.empty() ? 0 : results[0].loss_curve.size();
  char buf[48];
  for (size_t i = 0; i < iters; ++i) {
    csv += std::to_string(i);
    for (const auto& r : results) {
      std::snprintf(buf, sizeof(buf), ",%.7g", static_cast<double>(r.loss_curve[i]));
      csv += buf;
    }
    csv += "\n";
  }
  write_file_atomic((std::filesystem::path(out_dir) / "loss_curves.csv").string(), csv);

  std::string points;
  for (const auto& r : results) {
    double sum = 0;
    for (const auto& [k, v] : r.scores) sum += v;
    nlohmann::json j;
    j["label"] = r.arm.name;
    j["series"] = "ablate/" + r.arm.name;
    j["dataset"] = shards.empty() ? "unknown" : "ablation-corpus";
    j["params"] = static_cast<double>(r.param_count);
    j["tokens"] = static_cast<double>(schedule.total_iters * global_batch_tokens);
    j["tokens_label"] = std::to_string(schedule.total_iters * global_batch_tokens);
    j["provenance"] = "internal";
    j["per_task"] = r.scores;
    j["average"] = sum / static_cast<double>(r.scores.size());
    points += j.dump() + "\n";
  }
  write_file_atomic((std::filesystem::path(out_dir) / "runpoints.jsonl").string(), points);
  return results;
}

}  // namespace refbase
