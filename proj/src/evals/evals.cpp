#include "evals/evals.h"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>
#include <sstream>

#include "core/binio.h"
#include "core/error.h"
#include "core/rng.h"

namespace refbase {

std::string to_string(ScoringMode m) {
  return m == ScoringMode::raw_ll ? "raw_ll" : "length_normalized";
}

ScoringMode scoring_mode_from_string(const std::string& s) {
  if (s == "raw_ll") return ScoringMode::raw_ll;
  if (s == "length_normalized") return ScoringMode::length_normalized;
  throw DataError("unknown scoring mode '" + s + "'");
}

// --------------------------------------------------------------- loading

namespace {

std::vector<int32_t> tokens_field(const nlohmann::json& j) {
  std::vector<int32_t> out;
  for (const auto& v : j) out.push_back(v.get<int32_t>());
  return out;
}

struct TemplateSpec {
  std::string shot = "{context} {answer}";
  std::string separator = "<eod>";
};

std::string render_shot(const TemplateSpec& tmpl, const std::string& context,
                        const std::string& answer) {
  std::string out = tmpl.shot;
  auto replace = [&](const std::string& key, const std::string& value) {
    const size_t pos = out.find(key);
    if (pos != std::string::npos) out.replace(pos, key.size(), value);
  };
  replace("{context}", context);
  replace("{answer}", answer);
  return out;
}

}  // namespace

EvalTask parse_task_jsonl(const std::string& text, const std::string& origin,
                          const Vocabulary* vocab) {
  EvalTask task;
  TemplateSpec tmpl;
  bool saw_header = false;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw DataError(origin + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad json: ") + e.what());
    }
    try {
      if (!saw_header) {
        if (j.value("type", "") != "header") fail("first record must be the task header");
        task.name = j.at("name").get<std::string>();
        task.n_shots = j.value("n_shots", 0);
        task.scoring = scoring_mode_from_string(j.value("scoring", "raw_ll"));
        if (j.contains("separator_tokens"))
          task.separator_tokens = tokens_field(j.at("separator_tokens"));
        if (j.contains("template")) {
          tmpl.shot = j.at("template").value("shot", tmpl.shot);
          tmpl.separator = j.at("template").value("separator", tmpl.separator);
        }
        saw_header = true;
        continue;
      }
      EvalItem item;
      item.pool_only = j.value("pool", false);
      if (j.contains("context_tokens")) {
        item.context = tokens_field(j.at("context_tokens"));
        for (const auto& c : j.at("choices_tokens")) item.choices.push_back(tokens_field(c));
      } else {
        if (vocab == nullptr || !vocab->has_words())
          fail("text item needs a vocabulary with a word map");
        item.context = vocab->encode(j.at("context").get<std::string>());
        for (const auto& c : j.at("choices"))
          item.choices.push_back(vocab->encode(c.get<std::string>()));
      }
      item.gold = j.at("gold").get<int>();
      if (item.choices.size() < 2) fail("items need at least 2 choices");
      if (item.gold < 0 || item.gold >= static_cast<int>(item.choices.size()))
        fail("gold index " + std::to_string(item.gold) + " out of range");
      for (const auto& c : item.choices)
        if (c.empty()) fail("empty continuation");
      (item.pool_only ? task.pool : task.items).push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("schema: ") + e.what());
    }
  }
  if (!saw_header) throw DataError(origin + ": missing task header");
  if (task.items.empty()) throw DataError(origin + ": task has no items");
  if (task.separator_tokens.empty() && vocab != nullptr && vocab->has_words()) {
    // text tasks take the separator from the template
    try {
      task.separator_tokens = vocab->encode(tmpl.separator);
    } catch (const DataError&) {
      task.separator_tokens = {vocab->eod_id()};
    }
  }
  return task;
}

EvalTask load_task_jsonl(const std::string& path, const Vocabulary* vocab) {
  return parse_task_jsonl(read_file_bytes(path), path, vocab);
}

// --------------------------------------------------------------- scorers

std::optional<double> UniformScorer::score(const std::vector<int32_t>&,
                                           const std::vector<int32_t>& continuation) {
  if (continuation.empty()) throw DataError("score: empty continuation");
  return -static_cast<double>(continuation.size()) * std::log(static_cast<double>(vocab_));
}

GoldOracleScorer::GoldOracleScorer(const EvalTask& task) {
  for (const auto& item : task.items)
    preferred_.push_back(item.choices[static_cast<size_t>(item.gold)]);
}

std::optional<double> GoldOracleScorer::score(const std::vector<int32_t>&,
                                              const std::vector<int32_t>& continuation) {
  if (continuation.empty()) throw DataError("score: empty continuation");
  const bool hit = std::find(preferred_.begin(), preferred_.end(), continuation) != preferred_.end();
  return hit ? 0.0 : -1e3 * static_cast<double>(continuation.size());
}

std::optional<double> score_continuation(const Model<float>& model,
                                         const std::vector<int32_t>& context,
                                         const std::vector<int32_t>& continuation,
                                         int32_t bos_id) {
  if (continuation.empty()) throw DataError("score_continuation: empty continuation");
  const int64_t window = model.config().context_length;
  if (static_cast<int64_t>(continuation.size()) > window - 1) return std::nullopt;

  // left-truncate the context so context + continuation fit the window,
  // always keeping at least one conditioning token
  std::vector<int32_t> ctx = context;
  const int64_t max_ctx = window - static_cast<int64_t>(continuation.size());
  if (static_cast<int64_t>(ctx.size()) > max_ctx)
    ctx.erase(ctx.begin(), ctx.end() - max_ctx);
  if (ctx.empty()) ctx.push_back(bos_id);

  std::vector<int32_t> tokens = ctx;
  tokens.insert(tokens.end(), continuation.begin(), continuation.end());
  // predict positions ctx.size()-1 .. len-2; the final token is target-only
  std::vector<int32_t> inputs(tokens.begin(), tokens.end() - 1);
  const int64_t input_len = static_cast<int64_t>(inputs.size());

  Tape<float> tape;
  auto bound = model.bind(tape);
  TokenTensor batch({1, input_len}, std::move(inputs));
  const Tensor<float>& logits = tape.value(model.forward(tape, bound, batch, false));
  const int64_t v = logits.shape().back();

  double ll = 0;
  for (size_t j = 0; j < continuation.size(); ++j) {
    const int64_t row = static_cast<int64_t>(ctx.size()) - 1 + static_cast<int64_t>(j);
    const float* x = logits.data() + row * v;
    float m = x[0];
    for (int64_t k = 1; k < v; ++k) m = std::max(m, x[k]);
    double z = 0;
    for (int64_t k = 0; k < v; ++k) z += std::exp(static_cast<double>(x[k] - m));
    ll += static_cast<double>(x[continuation[j]] - m) - std::log(z);
  }
  return ll;
}

std::optional<double> ModelScorer::score(const std::vector<int32_t>& context,
                                         const std::vector<int32_t>& continuation) {
  return score_continuation(model_, context, continuation, bos_);
}

// -------------------------------------------------------------- evaluate

EvalRecord evaluate(SequenceScorer& scorer, const EvalTask& task, uint64_t seed,
                    std::optional<int> shots_override, std::optional<ScoringMode> mode_override,
                    const std::string& model_id) {
  const int n_shots = shots_override.value_or(task.n_shots);
  if (n_shots < 0) throw ConfigError("evaluate: n_shots must be >= 0");
  const ScoringMode mode = mode_override.value_or(task.scoring);
  const std::vector<EvalItem>& pool = task.pool.empty() ? task.items : task.pool;

  EvalRecord rec;
  rec.task = task.name;
  rec.model_id = model_id;
  rec.n_shots = n_shots;
  rec.scoring = mode;
  rec.seed = seed;

  for (size_t idx = 0; idx < task.items.size(); ++idx) {
    const EvalItem& item = task.items[idx];

    // seed-deterministic shot sample, never including the scored item
    std::vector<int32_t> prefix;
    if (n_shots > 0) {
      std::vector<size_t> order(pool.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng = Rng::from_stream(derive_seed(seed, 0x5807), idx);
      rng.shuffle(order);
      int taken = 0;
      for (size_t cand : order) {
        if (taken == n_shots) break;
        const EvalItem& shot = pool[cand];
        if (&shot == &item ||
            (shot.context == item.context && shot.choices == item.choices))
          continue;
        prefix.insert(prefix.end(), shot.context.begin(), shot.context.end());
        const auto& gold_cont = shot.choices[static_cast<size_t>(shot.gold)];
        prefix.insert(prefix.end(), gold_cont.begin(), gold_cont.end());
        prefix.insert(prefix.end(), task.separator_tokens.begin(), task.separator_tokens.end());
        ++taken;
      }
      if (taken < n_shots)
        throw DataError("evaluate: shot pool too small for " + std::to_string(n_shots) +
                        " shots on task '" + task.name + "'");
    }
    std::vector<int32_t> context = prefix;
    context.insert(context.end(), item.context.begin(), item.context.end());

    std::vector<double> lls;
    bool fits = true;
    for (const auto& choice : item.choices) {
      auto ll = scorer.score(context, choice);
      if (!ll) {
        fits = false;
        break;
      }
      lls.push_back(*ll);
    }
    if (!fits) {
      rec.skipped += 1;
      continue;
    }

    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < lls.size(); ++c) {
      const double s = mode == ScoringMode::raw_ll
                           ? lls[c]
                           : lls[c] / static_cast<double>(item.choices[c].size());
      if (s > best_score) {  // strict: ties keep the lowest index
        best_score = s;
        best = static_cast<int>(c);
      }
    }
    rec.items += 1;
    rec.correct += best == item.gold;
    rec.choice_lls.push_back(std::move(lls));
  }
  rec.accuracy = rec.items > 0
                     ? static_cast<double>(rec.correct) / static_cast<double>(rec.items)
                     : 0.0;
  return rec;
}

double aggregate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw DataError("aggregate: no records");
  std::set<std::string> names;
  double sum = 0;
  for (const auto& r : records) {
    if (!names.insert(r.task).second)
      throw DataError("aggregate: duplicate task name '" + r.task + "'");
    sum += r.accuracy;
  }
  return sum / static_cast<double>(records.size());
}

std::string EvalRecord::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["model_id"] = model_id;
  j["accuracy"] = accuracy;
  j["items"] = items;
  j["correct"] = correct;
  j["skipped"] = skipped;
  j["n_shots"] = n_shots;
  j["scoring"] = refbase::to_string(scoring);
  j["seed"] = seed;
  j["choice_lls"] = choice_lls;
  return j.dump();
}

EvalRecord EvalRecord::from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("eval record: ") + e.what());
  }
  EvalRecord r;
  try {
    r.task = j.at("task").get<std::string>();
    r.model_id = j.value("model_id", "");
    r.accuracy = j.at("accuracy").get<double>();
    r.items = j.at("items").get<int64_t>();
    r.correct = j.at("correct").get<int64_t>();
    r.skipped = j.value("skipped", 0);
    r.n_shots = j.value("n_shots", 0);
    r.scoring = scoring_mode_from_string(j.value("scoring", "raw_ll"));
    r.seed = j.value("seed", 0ULL);
    if (j.contains("choice_lls"))
      r.choice_lls = j.at("choice_lls").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("eval record: ") + e.what());
  }
  return r;
}

}  // namespace refbase
