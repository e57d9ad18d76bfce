#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/shard.h"
#include "data/vocab.h"

namespace refbase {

// Deterministic synthetic corpus: documents drawn from a sparse first-order
// Markov chain over a small active subset of a (padded) vocabulary. The
// structure is simple enough for a tiny model to learn in a few hundred
// iterations while still exercising the full pipeline.
struct SynthCorpusSpec {
  uint32_t vocab_size = 8192;
  int64_t n_tokens = 5'000'000;
  int n_active_words = 256;
  int branching = 4;          // successors per state
  int doc_len_min = 64;
  int doc_len_max = 256;
  int n_shards = 2;
  uint64_t seed = 1;
};

struct SynthCorpus {
  Vocabulary vocab;
  std::vector<TokenShard> shards;
  CorpusManifest manifest;  // shard_paths filled by write()
};

SynthCorpus make_synth_corpus(const SynthCorpusSpec& spec);

// Writes shards + corpus manifest + vocabulary under `dir`; returns the
// manifest path.
std::string write_synth_corpus(const SynthCorpusSpec& spec, const std::string& dir);

// Synthetic multiple-choice task in the eval harness's JSONL schema
// (token-form items). Gold indices are stratified so that chance level is
// exactly 1/n_choices, and all choices share one length so a uniform scorer
// ties on every item.
struct SynthTaskSpec {
  std::string name = "synthetic-mc";
  int n_items = 1000;
  int n_choices = 4;
  int context_len = 16;
  int choice_len = 3;
  uint32_t vocab_size = 8192;
  int n_shots = 0;
  uint64_t seed = 7;
};

std::string make_synth_task_jsonl(const SynthTaskSpec& spec);

}  // namespace refbase
