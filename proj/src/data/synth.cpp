#include "data/synth.h"

#include <algorithm>
#include <filesystem>
#include <json.hpp>
#include <set>

#include "core/binio.h"
#include "core/error.h"
#include "core/rng.h"

namespace refbase {

namespace {

std::vector<int32_t> pick_active_ids(uint32_t vocab_size, int n_active, Rng& rng) {
  // id 0 is reserved for EOD
  std::set<int32_t> ids;
  while (static_cast<int>(ids.size()) < n_active)
    ids.insert(1 + static_cast<int32_t>(rng.below(vocab_size - 1)));
  return {ids.begin(), ids.end()};
}

}  // namespace

SynthCorpus make_synth_corpus(const SynthCorpusSpec& spec) {
  if (spec.vocab_size < 16) throw ConfigError("synth corpus: vocab_size too small");
  if (spec.n_active_words < spec.branching + 1)
    throw ConfigError("synth corpus: need more active words than branching");
  if (spec.doc_len_min < 2 || spec.doc_len_max < spec.doc_len_min)
    throw ConfigError("synth corpus: bad document length range");
  if (spec.n_shards < 1 || spec.n_tokens < spec.doc_len_max * spec.n_shards)
    throw ConfigError("synth corpus: token budget too small for shard count");

  const std::string fingerprint = "synth-markov-v1/seed" + std::to_string(spec.seed) +
                                  "/vocab" + std::to_string(spec.vocab_size);
  Rng rng = Rng::from_stream(spec.seed, 0xC0D0);
  const std::vector<int32_t> active = pick_active_ids(spec.vocab_size, spec.n_active_words, rng);

  // sparse successor table over active-word indices
  std::vector<std::vector<int>> successors(active.size());
  for (auto& s : successors) {
    for (int b = 0; b < spec.branching; ++b)
      s.push_back(static_cast<int>(rng.below(active.size())));
  }

  SynthCorpus corpus;
  corpus.vocab = Vocabulary("synth-markov", fingerprint, static_cast<int32_t>(spec.vocab_size), 0);
  corpus.vocab.add_word("<eod>", 0);
  for (size_t i = 0; i < active.size(); ++i)
    corpus.vocab.add_word("w" + std::to_string(active[i]), active[i]);

  const int64_t per_shard = spec.n_tokens / spec.n_shards;
  int state = 0;
  for (int si = 0; si < spec.n_shards; ++si) {
    TokenShard shard;
    shard.vocab_size = spec.vocab_size;
    shard.eod_id = 0;
    shard.tokenizer_fingerprint = fingerprint;
    const int64_t target = si + 1 == spec.n_shards ? spec.n_tokens - per_shard * si : per_shard;
    shard.tokens.reserve(static_cast<size_t>(target));
    while (static_cast<int64_t>(shard.tokens.size()) < target) {
      const int64_t doc_len =
          spec.doc_len_min +
          static_cast<int64_t>(rng.below(static_cast<uint64_t>(spec.doc_len_max - spec.doc_len_min + 1)));
      state = static_cast<int>(rng.below(active.size()));
      for (int64_t t = 0; t + 1 < doc_len && static_cast<int64_t>(shard.tokens.size()) + 1 < target; ++t) {
        shard.tokens.push_back(active[static_cast<size_t>(state)]);
        state = successors[static_cast<size_t>(state)][rng.below(static_cast<uint64_t>(spec.branching))];
      }
      shard.tokens.push_back(0);  // EOD closes the document
    }
    corpus.shards.push_back(std::move(shard));
  }

  corpus.manifest.dataset_label = "synth-markov";
  corpus.manifest.tokenizer_fingerprint = fingerprint;
  corpus.manifest.vocab_size = spec.vocab_size;
  corpus.manifest.eod_id = 0;
  return corpus;
}

std::string write_synth_corpus(const SynthCorpusSpec& spec, const std::string& dir) {
  SynthCorpus corpus = make_synth_corpus(spec);
  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < corpus.shards.size(); ++i) {
    const std::string name = "shard-" + std::to_string(i) + ".bin";
    corpus.shards[i].write((std::filesystem::path(dir) / name).string());
    corpus.manifest.shard_paths.push_back(name);
  }
  corpus.vocab.save((std::filesystem::path(dir) / "vocab.json").string());
  const std::string manifest_path = (std::filesystem::path(dir) / "corpus.json").string();
  corpus.manifest.save(manifest_path);
  return manifest_path;
}

std::string make_synth_task_jsonl(const SynthTaskSpec& spec) {
  if (spec.n_choices < 2) throw ConfigError("synth task: need at least 2 choices");
  if (spec.n_items < spec.n_choices) throw ConfigError("synth task: too few items");
  Rng rng = Rng::from_stream(spec.seed, 0x7A5C);

  // stratified gold indices: exactly n/k per class (remainder spread low)
  std::vector<int> golds;
  for (int i = 0; i < spec.n_items; ++i) golds.push_back(i % spec.n_choices);
  rng.shuffle(golds);

  nlohmann::json header;
  header["type"] = "header";
  header["name"] = spec.name;
  header["n_shots"] = spec.n_shots;
  header["scoring"] = "raw_ll";
  header["separator_tokens"] = nlohmann::json::array({0});
  std::string out = header.dump() + "\n";

  auto rand_tokens = [&](int n) {
    std::vector<int32_t> v;
    for (int i = 0; i < n; ++i)
      v.push_back(1 + static_cast<int32_t>(rng.below(spec.vocab_size - 1)));
    return v;
  };
  // choices are globally unique so continuations identify items exactly
  std::set<std::vector<int32_t>> used;
  auto unique_tokens = [&](int n) {
    std::vector<int32_t> v = rand_tokens(n);
    while (!used.insert(v).second) v = rand_tokens(n);
    return v;
  };

  for (int i = 0; i < spec.n_items; ++i) {
    nlohmann::json item;
    item["context_tokens"] = rand_tokens(spec.context_len);
    nlohmann::json choices = nlohmann::json::array();
    for (int c = 0; c < spec.n_choices; ++c) choices.push_back(unique_tokens(spec.choice_len));
    item["choices_tokens"] = choices;
    item["gold"] = golds[static_cast<size_t>(i)];
    out += item.dump() + "\n";
  }
  return out;
}

}  // namespace refbase
