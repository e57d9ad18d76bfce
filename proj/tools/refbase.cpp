// Command-line front end: training, evaluation, compute ledger, schedule
// planning, shard inspection, and comparison reports.
//
// Exit codes: 0 success, 1 runtime fault (numeric abort, mid-run I/O
// failure), 2 usage or validation error.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "cli/manifest.h"
#include "compare/compare.h"
#include "compare/report.h"
#include "core/binio.h"
#include "core/error.h"
#include "data/synth.h"
#include "evals/evals.h"
#include "ledger/ledger.h"
#include "schedule/schedule.h"
#include "train/trainer.h"

namespace fs = std::filesystem;
using namespace refbase;

namespace {

// Initial artifact loads are validation: report them as exit-2 failures.
template <typename Fn>
auto load_or_usage(Fn&& fn) {
  try {
    return fn();
  } catch (const IoError& e) {
    throw DataError(e.what());
  }
}

struct TrainArgs {
  std::string manifest_path;
  std::optional<uint64_t> seed;
  std::string out_override;
  std::string resume;
  int64_t stop_after = -1;
  bool force = false;
};

int cmd_train(const TrainArgs& args) {
  RunManifest manifest = load_or_usage([&] { return RunManifest::load(args.manifest_path); });
  if (args.seed) manifest.seed = *args.seed;
  if (!args.out_override.empty()) manifest.out_dir = args.out_override;
  if (!fs::exists(manifest.corpus_manifest))
    throw DataError("train: corpus manifest not found: " + manifest.corpus_manifest);

  const auto corpus_manifest =
      load_or_usage([&] { return CorpusManifest::load(manifest.corpus_manifest); });
  auto shards = load_or_usage([&] { return load_corpus(corpus_manifest); });

  // document-level holdout for test-loss measurement
  std::vector<TokenShard> train_shards;
  std::optional<TokenShard> holdout;
  if (manifest.holdout_fraction > 0) {
    TokenShard merged = shards[0];
    for (size_t i = 1; i < shards.size(); ++i)
      merged.tokens.insert(merged.tokens.end(), shards[i].tokens.begin(), shards[i].tokens.end());
    auto [train_side, test_side] = split_holdout(merged, manifest.holdout_fraction, manifest.seed);
    train_shards.push_back(std::move(train_side));
    holdout = std::move(test_side);
  } else {
    train_shards = std::move(shards);
  }

  const std::string run_dir = (fs::path(manifest.out_dir) / manifest.run_id).string();
  const std::string final_path = (fs::path(run_dir) / "ckpt-final.bin").string();
  if (fs::exists(final_path) && args.resume.empty() && !args.force)
    throw DataError("train: " + final_path + " already exists (run ids are unique per output root; pass --force to redo)");

  TrainState state =
      args.resume.empty()
          ? init_train_state(manifest.model, manifest.schedule, manifest.optim,
                             manifest.global_batch_tokens, manifest.seed, manifest.run_id)
          : load_checkpoint(args.resume, manifest.model);

  BatchStream stream(train_shards, manifest.model.context_length,
                     manifest.global_batch_tokens, manifest.seed);
  TrainRunOptions opts;
  opts.out_dir = run_dir;
  opts.checkpoint_every = manifest.checkpoint_every;
  opts.micro_batch_rows = manifest.micro_batch_rows;
  opts.stop_after = args.stop_after;
  train(state, stream, opts);
  manifest.save((fs::path(run_dir) / "manifest.json").string());

  nlohmann::json metrics;
  metrics["iteration"] = state.iteration;
  metrics["tokens_seen"] = state.tokens_seen;
  metrics["final_train_loss"] =
      state.loss_history.empty() ? 0.0 : static_cast<double>(state.loss_history.back());
  if (holdout) {
    BatchStream eval_stream({*holdout}, manifest.model.context_length,
                            manifest.global_batch_tokens, manifest.seed);
    const int64_t n = std::min<int64_t>(20, eval_stream.batches_per_epoch());
    metrics["holdout_loss"] = eval_loss(state.model, eval_stream, n);
  }
  write_file_atomic((fs::path(run_dir) / "metrics.json").string(), metrics.dump(2) + "\n");
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string checkpoint_dir;
  std::string scorer = "model";
  int32_t uniform_vocab = 50304;
  std::vector<std::string> tasks;
  std::string vocab_path;
  std::optional<int> shots;
  std::optional<std::string> mode;
  uint64_t seed = 0;
  std::string out;
  std::string dynamics_csv;
};

std::vector<EvalRecord> eval_with_scorer(SequenceScorer& scorer, const std::vector<EvalTask>& tasks,
                                         const EvalArgs& args, const std::string& model_id) {
  std::vector<EvalRecord> records;
  std::optional<ScoringMode> mode;
  if (args.mode) mode = scoring_mode_from_string(*args.mode);
  for (const auto& task : tasks)
    records.push_back(evaluate(scorer, task, args.seed, args.shots, mode, model_id));
  return records;
}

int cmd_eval(const EvalArgs& args) {
  if (args.tasks.empty()) throw DataError("eval: no task files given");
  std::optional<Vocabulary> vocab;
  if (!args.vocab_path.empty())
    vocab = load_or_usage([&] { return Vocabulary::load(args.vocab_path); });
  std::vector<EvalTask> tasks;
  for (const auto& path : args.tasks) {
    if (!fs::exists(path)) throw DataError("eval: task file not found: " + path);
    tasks.push_back(load_task_jsonl(path, vocab ? &*vocab : nullptr));
  }

  auto run_one = [&](const std::string& ckpt_path) {
    TrainState state = load_or_usage([&] { return load_checkpoint(ckpt_path); });
    ModelScorer scorer(state.model, 0);
    auto records = eval_with_scorer(scorer, tasks, args, fs::path(ckpt_path).filename().string());
    return std::make_pair(state.tokens_seen, records);
  };

  std::string out_lines;
  if (!args.checkpoint_dir.empty()) {
    std::vector<std::string> ckpts;
    for (const auto& entry : fs::directory_iterator(args.checkpoint_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("ckpt-", 0) == 0 && name.find("final") == std::string::npos &&
          entry.path().extension() == ".bin")
        ckpts.push_back(entry.path().string());
    }
    if (ckpts.empty()) throw DataError("eval: no checkpoints in " + args.checkpoint_dir);
    std::sort(ckpts.begin(), ckpts.end());
    std::string csv = "checkpoint,tokens_seen,average\n";
    char buf[64];
    for (const auto& c : ckpts) {
      auto [tokens_seen, records] = run_one(c);
      for (const auto& r : records) out_lines += r.to_json() + "\n";
      std::snprintf(buf, sizeof(buf), "%lld,%.6g", static_cast<long long>(tokens_seen),
                    aggregate(records));
      csv += fs::path(c).filename().string() + "," + buf + "\n";
    }
    const std::string csv_path =
        args.dynamics_csv.empty() ? "eval_dynamics.csv" : args.dynamics_csv;
    write_file_atomic(csv_path, csv);
    std::cout << csv;
  } else {
    std::vector<EvalRecord> records;
    std::string model_id;
    if (args.scorer == "uniform") {
      UniformScorer scorer(args.uniform_vocab);
      model_id = "uniform";
      records = eval_with_scorer(scorer, tasks, args, model_id);
    } else {
      if (args.checkpoint.empty()) throw DataError("eval: --checkpoint required");
      auto [tokens_seen, recs] = run_one(args.checkpoint);
      records = std::move(recs);
    }
    for (const auto& r : records) {
      out_lines += r.to_json() + "\n";
      std::cout << r.task << ": accuracy " << r.accuracy << " (" << r.correct << "/" << r.items
                << ", skipped " << r.skipped << ")\n";
    }
    nlohmann::json agg;
    agg["task"] = "aggregate";
    agg["accuracy"] = aggregate(records);
    agg["tasks"] = records.size();
    out_lines += agg.dump() + "\n";
    std::cout << "aggregate: " << agg["accuracy"].get<double>() << "\n";
  }
  if (!args.out.empty()) write_file_atomic(args.out, out_lines);
  return 0;
}

struct CompareArgs {
  std::vector<std::string> points_files;
  std::string mode = "rank";
  std::string out_dir = ".";
  std::optional<double> rank_params;
  std::string rank_tokens;
  double n_tolerance = 0.05;
};

int cmd_compare(const CompareArgs& args) {
  if (args.points_files.empty()) throw DataError("compare: no point files given");
  std::vector<RunPoint> points;
  for (const auto& path : args.points_files) {
    if (!fs::exists(path)) throw DataError("compare: points file not found: " + path);
    RunPointLoad load = load_or_usage([&] { return load_runpoints_jsonl(path); });
    if (!load.rejected.empty()) {
      for (const auto& msg : load.rejected) std::cerr << "rejected: " << msg << "\n";
      throw DataError("compare: " + std::to_string(load.rejected.size()) +
                      " malformed point records");
    }
    points.insert(points.end(), load.points.begin(), load.points.end());
  }
  if (points.empty()) throw DataError("compare: no points loaded");
  fs::create_directories(args.out_dir);
  auto emit = [&](const std::string& name, const std::string& body) {
    write_file_atomic((fs::path(args.out_dir) / name).string(), body);
  };

  if (args.mode == "rank") {
    emit("points.md", points_markdown(points));
    emit("points.csv", points_csv(points));
    std::cout << points_markdown(points);
    if (args.rank_params && !args.rank_tokens.empty()) {
      std::vector<RunPoint> at_scale;
      for (const auto& p : points)
        if (p.tokens_label == args.rank_tokens && p.provenance == "internal" &&
            std::fabs(p.params_n / *args.rank_params - 1.0) <= args.n_tolerance)
          at_scale.push_back(p);
      const Ranking ranking = rank_datasets(at_scale, args.n_tolerance);
      emit("ranking.md", ranking_markdown(ranking));
      emit("ranking.csv", ranking_csv(ranking));
      std::cout << "\n" << ranking_markdown(ranking);
    }
  } else if (args.mode == "trend") {
    const auto series = align(points);
    emit("trend.csv", trend_csv(series));
    emit("trend_fit.svg", scaling_svg(series, "fit"));
    emit("trend_connect.svg", scaling_svg(series, "connect"));
    std::cout << trend_csv(series);
  } else if (args.mode == "flag") {
    emit("dominance.md", dominance_markdown(points));
    emit("dominance.csv", dominance_csv(points));
    std::cout << dominance_markdown(points);
  } else {
    throw DataError("compare: unknown mode '" + args.mode + "' (rank, trend, flag)");
  }
  return 0;
}

struct LedgerArgs {
  std::vector<double> nd;
  std::string points_file;
  std::string format = "csv";
  std::string out;
};

int cmd_ledger(const LedgerArgs& args) {
  std::vector<ComputeRecord> records;
  if (!args.points_file.empty()) {
    RunPointLoad load = load_or_usage([&] { return load_runpoints_jsonl(args.points_file); });
    for (const auto& p : load.points)
      records.push_back(make_record(p.label + "/" + p.dataset, p.params_n, p.tokens_d));
  } else if (args.nd.size() == 2) {
    std::cout << format_sig_figs(total_compute(args.nd[0], args.nd[1]), 3) << "\n";
    return 0;
  } else if (args.nd.size() == 1) {
    std::cout << format_sig_figs(flops_per_token(args.nd[0]), 3) << "\n";
    return 0;
  } else {
    throw DataError("ledger: pass PARAMS [TOKENS] or --points FILE");
  }
  const std::string body = args.format == "markdown" ? ledger_markdown(records)
                                                     : ledger_csv(records);
  if (!args.out.empty()) write_file_atomic(args.out, body);
  std::cout << body;
  return 0;
}

struct ScheduleArgs {
  std::string kind = "wsd";
  double tokens = 0;
  int64_t gbs = 0;
  double lr = 0;
  int64_t warmup = 0;
  double min_lr_fraction = 0.1;
  std::string csv;
  int64_t stride = 1;
  int64_t branch = -1;
};

int cmd_schedule(const ScheduleArgs& args) {
  ScheduleSpec spec = plan_from_budget(args.tokens, args.gbs, args.lr, args.warmup,
                                       schedule_kind_from_string(args.kind));
  spec.min_lr_fraction = args.min_lr_fraction;
  if (args.branch >= 0) spec = cooldown_branch(spec, args.branch);
  std::cout << "kind " << to_string(spec.kind) << "\n"
            << "total_iters " << spec.total_iters << "\n"
            << "warmup_iters " << spec.warmup_iters << "\n";
  if (spec.kind == ScheduleKind::wsd)
    std::cout << "cooldown_iters " << spec.cooldown_iters << "\n";
  std::cout << "spec " << spec.to_json() << "\n";
  if (!args.csv.empty()) write_file_atomic(args.csv, lr_curve_csv(spec, args.stride));
  return 0;
}

int cmd_shard_info(const std::string& path) {
  if (!fs::exists(path)) throw DataError("shard-info: file not found: " + path);
  const TokenShard shard = load_or_usage([&] { return TokenShard::read(path); });
  int64_t docs = 0;
  for (int32_t t : shard.tokens) docs += t == shard.eod_id;
  std::cout << "tokens " << shard.token_count() << "\n"
            << "vocab_size " << shard.vocab_size << "\n"
            << "eod_id " << shard.eod_id << "\n"
            << "documents " << docs << "\n"
            << "fingerprint " << shard.tokenizer_fingerprint << "\n";
  return 0;
}

struct AblateArgs {
  std::string manifest_path;
  std::vector<std::string> flags;
  std::vector<std::string> tasks;
  std::string vocab_path;
  std::string out_dir;
  uint64_t eval_seed = 0;
};

int cmd_ablate(const AblateArgs& args) {
  RunManifest manifest = load_or_usage([&] { return RunManifest::load(args.manifest_path); });
  if (!fs::exists(manifest.corpus_manifest))
    throw DataError("ablate: corpus manifest not found: " + manifest.corpus_manifest);
  auto shards = load_or_usage(
      [&] { return load_corpus(CorpusManifest::load(manifest.corpus_manifest)); });

  ArmScoreFn score_fn;
  if (!args.tasks.empty()) {
    std::optional<Vocabulary> vocab;
    if (!args.vocab_path.empty()) vocab = Vocabulary::load(args.vocab_path);
    std::vector<EvalTask> tasks;
    for (const auto& t : args.tasks) tasks.push_back(load_task_jsonl(t, vocab ? &*vocab : nullptr));
    const uint64_t seed = args.eval_seed;
    score_fn = [tasks, seed](const Model<float>& model) {
      ModelScorer scorer(model, 0);
      std::map<std::string, double> scores;
      for (const auto& task : tasks)
        scores[task.name] = evaluate(scorer, task, seed).accuracy;
      return scores;
    };
  }
  const std::string out =
      args.out_dir.empty() ? (fs::path(manifest.out_dir) / (manifest.run_id + "-ablate")).string()
                           : args.out_dir;
  auto results = run_ablation(manifest.model, manifest.schedule, manifest.optim, shards,
                              manifest.global_batch_tokens, manifest.seed, args.flags, out,
                              score_fn);
  for (const auto& r : results)
    std::cout << r.arm.name << ": params " << r.param_count << ", final loss "
              << r.final_eval_loss << "\n";
  std::cout << "reports in " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale reference pretraining and compute-aligned comparison harness"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "run or resume a training manifest");
  train_cmd->add_option("--manifest", train_args.manifest_path)->required();
  train_cmd->add_option("--seed", train_args.seed, "override the manifest seed");
  train_cmd->add_option("--out", train_args.out_override, "override the output root");
  train_cmd->add_option("--resume", train_args.resume, "checkpoint to resume from");
  train_cmd->add_option("--stop-after", train_args.stop_after, "pause at this iteration");
  train_cmd->add_flag("--force", train_args.force, "allow overwriting a finished run");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "log-likelihood multiple-choice evaluation");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint);
  eval_cmd->add_option("--checkpoint-dir", eval_args.checkpoint_dir,
                       "evaluate every checkpoint (training dynamics)");
  eval_cmd->add_option("--scorer", eval_args.scorer, "model|uniform");
  eval_cmd->add_option("--uniform-vocab", eval_args.uniform_vocab);
  eval_cmd->add_option("--task", eval_args.tasks, "task JSONL file(s)")->required();
  eval_cmd->add_option("--vocab", eval_args.vocab_path, "vocabulary for text-form tasks");
  eval_cmd->add_option("--shots", eval_args.shots, "override task n_shots");
  eval_cmd->add_option("--mode", eval_args.mode, "raw_ll|length_normalized");
  eval_cmd->add_option("--seed", eval_args.seed);
  eval_cmd->add_option("--out", eval_args.out, "write EvalRecord JSONL here");
  eval_cmd->add_option("--dynamics-csv", eval_args.dynamics_csv);

  CompareArgs compare_args;
  auto* compare_cmd = app.add_subcommand("compare", "compute-axis comparison reports");
  compare_cmd->add_option("--points", compare_args.points_files, "RunPoint JSONL file(s)")
      ->required();
  compare_cmd->add_option("--mode", compare_args.mode, "rank|trend|flag");
  compare_cmd->add_option("--out-dir", compare_args.out_dir);
  compare_cmd->add_option("--rank-params", compare_args.rank_params,
                          "dataset ranking at this parameter scale");
  compare_cmd->add_option("--rank-tokens", compare_args.rank_tokens,
                          "dataset ranking at this token label (e.g. 1T)");
  compare_cmd->add_option("--n-tolerance", compare_args.n_tolerance);

  LedgerArgs ledger_args;
  auto* ledger_cmd = app.add_subcommand("ledger", "6N / 6ND compute accounting");
  ledger_cmd->add_option("values", ledger_args.nd, "PARAMS [TOKENS]");
  ledger_cmd->add_option("--points", ledger_args.points_file, "RunPoint JSONL");
  ledger_cmd->add_option("--format", ledger_args.format, "csv|markdown");
  ledger_cmd->add_option("--out", ledger_args.out);

  ScheduleArgs schedule_args;
  auto* schedule_cmd = app.add_subcommand("schedule", "plan a schedule from a token budget");
  schedule_cmd->add_option("--kind", schedule_args.kind, "wsd|cosine");
  schedule_cmd->add_option("--tokens", schedule_args.tokens)->required();
  schedule_cmd->add_option("--gbs", schedule_args.gbs, "global batch size in tokens")->required();
  schedule_cmd->add_option("--lr", schedule_args.lr)->required();
  schedule_cmd->add_option("--warmup", schedule_args.warmup)->required();
  schedule_cmd->add_option("--min-lr-fraction", schedule_args.min_lr_fraction);
  schedule_cmd->add_option("--csv", schedule_args.csv, "write the lr curve here");
  schedule_cmd->add_option("--stride", schedule_args.stride);
  schedule_cmd->add_option("--branch", schedule_args.branch,
                           "anneal from this stable-phase iteration");

  std::string shard_path;
  auto* shard_cmd = app.add_subcommand("shard-info", "inspect a token shard");
  shard_cmd->add_option("path", shard_path)->required();

  SynthCorpusSpec corpus_spec;
  std::string corpus_out;
  auto* synth_corpus_cmd = app.add_subcommand("synth-corpus", "generate a synthetic corpus");
  synth_corpus_cmd->add_option("--out", corpus_out)->required();
  synth_corpus_cmd->add_option("--tokens", corpus_spec.n_tokens);
  synth_corpus_cmd->add_option("--vocab", corpus_spec.vocab_size);
  synth_corpus_cmd->add_option("--seed", corpus_spec.seed);
  synth_corpus_cmd->add_option("--shards", corpus_spec.n_shards);
  synth_corpus_cmd->add_option("--active-words", corpus_spec.n_active_words);

  SynthTaskSpec task_spec;
  std::string task_out;
  auto* synth_task_cmd = app.add_subcommand("synth-task", "generate a synthetic eval task");
  synth_task_cmd->add_option("--out", task_out)->required();
  synth_task_cmd->add_option("--items", task_spec.n_items);
  synth_task_cmd->add_option("--choices", task_spec.n_choices);
  synth_task_cmd->add_option("--seed", task_spec.seed);
  synth_task_cmd->add_option("--vocab", task_spec.vocab_size);
  synth_task_cmd->add_option("--name", task_spec.name);

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "comparative toy runs with features toggled");
  ablate_cmd->add_option("--manifest", ablate_args.manifest_path)->required();
  ablate_cmd->add_option("--flags", ablate_args.flags, "biases, qk_norm, dropout")
      ->required()
      ->delimiter(',');
  ablate_cmd->add_option("--task", ablate_args.tasks, "score arms on these tasks");
  ablate_cmd->add_option("--vocab", ablate_args.vocab_path);
  ablate_cmd->add_option("--out-dir", ablate_args.out_dir);
  ablate_cmd->add_option("--eval-seed", ablate_args.eval_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*compare_cmd) return cmd_compare(compare_args);
    if (*ledger_cmd) return cmd_ledger(ledger_args);
    if (*schedule_cmd) return cmd_schedule(schedule_args);
    if (*shard_cmd) return cmd_shard_info(shard_path);
    if (*synth_corpus_cmd) {
      const std::string manifest = write_synth_corpus(corpus_spec, corpus_out);
      std::cout << "corpus manifest " << manifest << "\n";
      return 0;
    }
    if (*synth_task_cmd) {
      write_file_atomic(task_out, make_synth_task_jsonl(task_spec));
      std::cout << "task " << task_out << "\n";
      return 0;
    }
    if (*ablate_cmd) return cmd_ablate(ablate_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "fault: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fault: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
