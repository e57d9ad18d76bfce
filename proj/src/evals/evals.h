#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "data/vocab.h"
#include "model/model.h"

namespace refbase {

enum class ScoringMode { raw_ll, length_normalized };

std::string to_string(ScoringMode m);
ScoringMode scoring_mode_from_string(const std::string& s);

// One multiple-choice item, already in token form. Items loaded from text
// tasks are encoded through the task's vocabulary at load time.
struct EvalItem {
  std::vector<int32_t> context;
  std::vector<std::vector<int32_t>> choices;
  int gold = 0;
  bool pool_only = false;  // usable as a few-shot example, never scored
};

// Few-shot multiple-choice task. JSONL on disk: a header object followed by
// one item per line; formatting templates are data, not code.
struct EvalTask {
  std::string name;
  int n_shots = 0;
  ScoringMode scoring = ScoringMode::raw_ll;
  std::vector<int32_t> separator_tokens;  // between shot blocks
  std::vector<EvalItem> items;            // scored items
  std::vector<EvalItem> pool;             // shot pool (empty: use items)
};

// Throws DataError with the offending line number on schema violations.
EvalTask load_task_jsonl(const std::string& path, const Vocabulary* vocab = nullptr);
EvalTask parse_task_jsonl(const std::string& text, const std::string& origin,
                          const Vocabulary* vocab = nullptr);

// -------------------------------------------------------------- scorers

// Sum over continuation positions of log p(token | prefix); the context
// conditions only. nullopt: the continuation cannot fit the context window.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  virtual std::optional<double> score(const std::vector<int32_t>& context,
                                      const std::vector<int32_t>& continuation) = 0;
};

// Every token uniformly likely: ll = -len * ln(vocab).
class UniformScorer : public SequenceScorer {
 public:
  explicit UniformScorer(int32_t vocab_size) : vocab_(vocab_size) {}
  std::optional<double> score(const std::vector<int32_t>&,
                              const std::vector<int32_t>& continuation) override;

 private:
  int32_t vocab_;
};

// Prefers a known set of continuations; test double for harness checks.
class GoldOracleScorer : public SequenceScorer {
 public:
  explicit GoldOracleScorer(const EvalTask& task);
  std::optional<double> score(const std::vector<int32_t>& context,
                              const std::vector<int32_t>& continuation) override;

 private:
  std::vector<std::vector<int32_t>> preferred_;
};

// Scores through a trained decoder. Context is truncated from the left when
// context + continuation exceed the window; an empty (or fully truncated)
// context is replaced by the EOD/BOS token.
class ModelScorer : public SequenceScorer {
 public:
  ModelScorer(const Model<float>& model, int32_t bos_id) : model_(model), bos_(bos_id) {}
  std::optional<double> score(const std::vector<int32_t>& context,
                              const std::vector<int32_t>& continuation) override;

 private:
  const Model<float>& model_;
  int32_t bos_;
};

// The raw scoring primitive behind ModelScorer; throws DataError on an
// empty continuation, IoError never; truncation as above.
std::optional<double> score_continuation(const Model<float>& model,
                                         const std::vector<int32_t>& context,
                                         const std::vector<int32_t>& continuation,
                                         int32_t bos_id);

// -------------------------------------------------------------- records

struct EvalRecord {
  std::string task;
  std::string model_id;
  double accuracy = 0;
  int64_t items = 0;    // scored items
  int64_t correct = 0;
  int64_t skipped = 0;  // did not fit the context window
  int n_shots = 0;
  ScoringMode scoring = ScoringMode::raw_ll;
  uint64_t seed = 0;
  std::vector<std::vector<double>> choice_lls;  // per scored item

  std::string to_json() const;
  static EvalRecord from_json(const std::string& line);
};

// Scores every item with seed-deterministic few-shot sampling. Ties go to
// the lowest choice index. Items that cannot fit are tallied as skipped,
// never silently dropped; accuracy == correct / items exactly.
EvalRecord evaluate(SequenceScorer& scorer, const EvalTask& task, uint64_t seed,
                    std::optional<int> shots_override = {},
                    std::optional<ScoringMode> mode_override = {},
                    const std::string& model_id = "");

// Unweighted mean accuracy; duplicate task names are an error.
double aggregate(const std::vector<EvalRecord>& records);

}  // namespace refbase
