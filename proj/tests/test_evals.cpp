#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "data/synth.h"
#include "evals/evals.h"
#include "support.h"

using namespace refbase;

namespace {

Model<float> tiny_model(uint64_t seed = 5) {
  ModelConfig c;
  c.layers = 2;
  c.hidden = 32;
  c.heads = 4;
  c.ffn_hidden = 96;
  c.vocab = 128;
  c.context_length = 64;
  c.dropout_p = 0.0;
  return Model<float>::build(c, seed);
}

EvalTask synth_task(int items, int choices, uint64_t seed, int vocab = 128) {
  SynthTaskSpec spec;
  spec.n_items = items;
  spec.n_choices = choices;
  spec.seed = seed;
  spec.vocab_size = static_cast<uint32_t>(vocab);
  spec.context_len = 6;
  spec.choice_len = 2;
  return parse_task_jsonl(make_synth_task_jsonl(spec), "synth");
}

}  // namespace

TEST_CASE("uniform scorer: ll is -len*ln(V); 3-token continuation gives -3 ln V") {
  UniformScorer scorer(50304);
  const double ll = *scorer.score({1, 2}, {3, 4, 5});
  CHECK(ll == doctest::Approx(-3.0 * std::log(50304.0)).epsilon(1e-12));
  CHECK_THROWS_AS(scorer.score({1}, {}), DataError);
}

TEST_CASE("score_continuation agrees with log-softmax of the forward logits") {
  auto model = tiny_model(29);
  const std::vector<int32_t> ctx{3, 60, 12}, cont{9};
  const double ll = *score_continuation(model, ctx, cont, 0);

  Tape<float> tape;
  auto bound = model.bind(tape);
  const Tensor<float>& logits =
      tape.value(model.forward(tape, bound, TokenTensor({1, 3}, ctx)));
  const float* row = logits.data() + 2 * 128;  // logits after the last context token
  double m = row[0];
  for (int j = 1; j < 128; ++j) m = std::max(m, static_cast<double>(row[j]));
  double z = 0;
  for (int j = 0; j < 128; ++j) z += std::exp(row[j] - m);
  const double expected = row[9] - m - std::log(z);
  CHECK(ll == doctest::Approx(expected).epsilon(1e-6));

  // saturation: a logit that dominates by +20 puts the ll within 1e-5 of 0
  const double dominated_ll = std::log(1.0 / (1.0 + 127.0 * std::exp(-20.0)));
  CHECK(dominated_ll > -1e-5);
  CHECK(dominated_ll <= 0.0);
}

TEST_CASE("model scorer: uniform-logit behaviour on a fresh tiny model") {
  auto model = tiny_model();
  ModelScorer scorer(model, 0);
  const double ll = *scorer.score({1, 2, 3}, {4, 5});
  // fresh model is near-uniform: within half a nat per token of -ln V
  CHECK(ll < -2.0 * std::log(128.0) + 1.0);
  CHECK(ll > -2.0 * std::log(128.0) - 1.0);
}

TEST_CASE("concatenation property: ll(ctx, a++b) == ll(ctx, a) + ll(ctx++a, b)") {
  auto model = tiny_model(11);
  const std::vector<int32_t> ctx{5, 9, 17}, a{40, 41}, b{90, 3, 77};
  std::vector<int32_t> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  std::vector<int32_t> ctx_a = ctx;
  ctx_a.insert(ctx_a.end(), a.begin(), a.end());
  const double whole = *score_continuation(model, ctx, ab, 0);
  const double split = *score_continuation(model, ctx, a, 0) +
                       *score_continuation(model, ctx_a, b, 0);
  CHECK(whole == doctest::Approx(split).epsilon(1e-5));
}

TEST_CASE("context is left-truncated; over-long continuations are skipped") {
  auto model = tiny_model();
  ModelScorer scorer(model, 0);
  std::vector<int32_t> long_ctx(100, 3);  // window is 64
  CHECK(scorer.score(long_ctx, {5}).has_value());
  std::vector<int32_t> long_cont(64, 4);
  CHECK(!scorer.score({1}, long_cont).has_value());

  // empty context falls back to the BOS token
  CHECK(scorer.score({}, {5, 6}).has_value());
}

TEST_CASE("chance-level calibration on a stratified 4-choice task") {
  const EvalTask task = synth_task(1000, 4, 7, 8192);
  UniformScorer scorer(8192);
  const EvalRecord rec = evaluate(scorer, task, 1);
  CHECK(rec.items == 1000);
  CHECK(rec.skipped == 0);
  // equal-length choices tie exactly; lowest index wins; golds stratified
  CHECK(rec.accuracy == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("gold oracle scores a perfect run") {
  const EvalTask task = synth_task(60, 4, 9);
  GoldOracleScorer oracle(task);
  const EvalRecord rec = evaluate(oracle, task, 3);
  CHECK(rec.accuracy == 1.0);
  CHECK(rec.correct == 60);
}

TEST_CASE("adding a constant to every ll never changes the raw_ll argmax") {
  struct ShiftScorer : SequenceScorer {
    SequenceScorer& inner;
    double shift;
    ShiftScorer(SequenceScorer& s, double c) : inner(s), shift(c) {}
    std::optional<double> score(const std::vector<int32_t>& ctx,
                                const std::vector<int32_t>& cont) override {
      auto v = inner.score(ctx, cont);
      return v ? std::optional<double>(*v + shift) : std::nullopt;
    }
  };
  auto model = tiny_model(13);
  const EvalTask task = synth_task(40, 3, 5);
  ModelScorer base(model, 0);
  ShiftScorer shifted(base, 12.5);
  const EvalRecord a = evaluate(base, task, 2);
  const EvalRecord b = evaluate(shifted, task, 2);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.correct == b.correct);
}

TEST_CASE("fixed seed gives identical records; shots come from the pool only") {
  auto model = tiny_model(17);
  ModelScorer scorer(model, 0);
  EvalTask task = synth_task(30, 4, 21);
  task.n_shots = 2;
  const EvalRecord a = evaluate(scorer, task, 42);
  const EvalRecord b = evaluate(scorer, task, 42);
  CHECK(a.choice_lls == b.choice_lls);
  CHECK(a.accuracy == b.accuracy);
  const EvalRecord c = evaluate(scorer, task, 43);
  CHECK(a.choice_lls != c.choice_lls);  // different shot prefixes move the lls
}

TEST_CASE("length-normalized mode divides by continuation length") {
  struct FixedScorer : SequenceScorer {
    std::optional<double> score(const std::vector<int32_t>&,
                                const std::vector<int32_t>& cont) override {
      // raw ll favours the long continuation; per-token ll favours the short
      return cont.size() == 1 ? -2.0 : -3.0;
    }
  };
  EvalTask task;
  task.name = "norm";
  task.n_shots = 0;
  EvalItem item;
  item.context = {1};
  item.choices = {{5}, {6, 7}};  // -2.0 vs -3.0 raw; -2.0 vs -1.5 per token
  item.gold = 1;
  task.items.push_back(item);
  FixedScorer scorer;
  CHECK(evaluate(scorer, task, 0, {}, ScoringMode::raw_ll).accuracy == 0.0);
  CHECK(evaluate(scorer, task, 0, {}, ScoringMode::length_normalized).accuracy == 1.0);
}

TEST_CASE("aggregate averages accuracies and rejects duplicates") {
  EvalRecord a, b, c;
  a.task = "t1";
  a.accuracy = 0.5;
  b.task = "t2";
  b.accuracy = 0.7;
  CHECK(aggregate({a, b}) == doctest::Approx(0.6));
  CHECK(aggregate({a}) == doctest::Approx(0.5));
  c.task = "t1";
  c.accuracy = 0.2;
  CHECK_THROWS_WITH_AS(aggregate({a, b, c}), doctest::Contains("duplicate"), DataError);
  CHECK_THROWS_AS(aggregate({}), DataError);
}

TEST_CASE("published per-task rows aggregate to the printed averages") {
  auto mean11 = [](std::initializer_list<double> v) {
    EvalRecord r;
    std::vector<EvalRecord> records;
    int i = 0;
    for (double x : v) {
      EvalRecord rec;
      rec.task = "t" + std::to_string(i++);
      rec.accuracy = x;
      records.push_back(rec);
    }
    return aggregate(records);
  };
  CHECK(std::fabs(mean11({0.84, 0.60, 0.43, 0.63, 0.50, 0.51, 0.80, 0.79, 0.62, 0.72, 0.79}) -
                  0.66) < 0.005);
  CHECK(std::fabs(mean11({0.74, 0.53, 0.33, 0.59, 0.27, 0.39, 0.73, 0.61, 0.19, 0.60, 0.74}) -
                  0.52) < 0.005);
}

TEST_CASE("task files parse from text with a vocabulary and report line numbers") {
  Vocabulary vocab("t", "fp", 64, 0);
  vocab.add_word("<eod>", 0);
  vocab.add_word("one", 1);
  vocab.add_word("two", 2);
  vocab.add_word("three", 3);
  const std::string good =
      R"({"type":"header","name":"mini","n_shots":1,"scoring":"raw_ll","template":{"shot":"{context} {answer}","separator":"<eod>"}}
{"context":"one one","choices":["two","three"],"gold":0}
{"context":"two two","choices":["one","three"],"gold":1}
{"context":"three three","choices":["one","two"],"gold":0,"pool":true}
)";
  const EvalTask task = parse_task_jsonl(good, "mini.jsonl", &vocab);
  CHECK(task.items.size() == 2);
  CHECK(task.pool.size() == 1);
  CHECK(task.items[0].context == std::vector<int32_t>{1, 1});
  CHECK(task.separator_tokens == std::vector<int32_t>{0});

  const std::string bad_gold =
      "{\"type\":\"header\",\"name\":\"x\"}\n"
      "{\"context_tokens\":[1],\"choices_tokens\":[[2],[3]],\"gold\":5}\n";
  CHECK_THROWS_WITH_AS(parse_task_jsonl(bad_gold, "x.jsonl"), doctest::Contains("x.jsonl:2"),
                       DataError);
  const std::string empty_choice =
      "{\"type\":\"header\",\"name\":\"x\"}\n"
      "{\"context_tokens\":[1],\"choices_tokens\":[[2],[]],\"gold\":0}\n";
  CHECK_THROWS_WITH_AS(parse_task_jsonl(empty_choice, "x.jsonl"),
                       doctest::Contains("empty continuation"), DataError);
  CHECK_THROWS_AS(parse_task_jsonl("", "x.jsonl"), DataError);
}

TEST_CASE("eval records round-trip through jsonl") {
  EvalRecord r;
  r.task = "demo";
  r.model_id = "ckpt-1";
  r.accuracy = 0.75;
  r.items = 4;
  r.correct = 3;
  r.skipped = 1;
  r.n_shots = 2;
  r.scoring = ScoringMode::length_normalized;
  r.seed = 99;
  r.choice_lls = {{-1.0, -2.0}, {-0.5, -3.0}};
  const EvalRecord back = EvalRecord::from_json(r.to_json());
  CHECK(back.task == r.task);
  CHECK(back.accuracy == r.accuracy);
  CHECK(back.skipped == r.skipped);
  CHECK(back.scoring == r.scoring);
  CHECK(back.choice_lls == r.choice_lls);
}

TEST_CASE("items that cannot fit the window are tallied as skipped") {
  auto model = tiny_model();
  ModelScorer scorer(model, 0);
  EvalTask task = synth_task(5, 3, 31);
  EvalItem big;
  big.context = {1, 2};
  big.choices = {std::vector<int32_t>(80, 4), {5}, {6}};  // first choice cannot fit 64
  big.gold = 1;
  task.items.push_back(big);
  const EvalRecord rec = evaluate(scorer, task, 1);
  CHECK(rec.skipped == 1);
  CHECK(rec.items == 5);
  CHECK(rec.accuracy == static_cast<double>(rec.correct) / 5.0);
}
