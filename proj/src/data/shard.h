#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace refbase {

// One tokenized corpus shard: a header plus a contiguous little-endian
// stream of 32-bit token ids, with a trailing CRC over the whole file.
// Documents inside the payload are separated by the EOD token.
struct TokenShard {
  static constexpr char kMagic[9] = "RBSHARD1";
  static constexpr uint32_t kVersion = 1;
  static constexpr uint32_t kTokenWidth = 4;

  uint32_t vocab_size = 0;
  int32_t eod_id = 0;
  std::string tokenizer_fingerprint;
  std::vector<int32_t> tokens;

  int64_t token_count() const { return static_cast<int64_t>(tokens.size()); }

  void write(const std::string& path) const;
  static TokenShard read(const std::string& path);

  // Validates ids against vocab_size; throws DataError on violation.
  void check_ids() const;
};

// Corpus manifest: dataset label, tokenizer fingerprint, shard paths
// (relative paths resolve against the manifest's directory).
struct CorpusManifest {
  std::string dataset_label;
  std::string tokenizer_fingerprint;
  uint32_t vocab_size = 0;
  int32_t eod_id = 0;
  std::vector<std::string> shard_paths;

  void save(const std::string& path) const;
  static CorpusManifest load(const std::string& path);
};

// Loads every shard in the manifest, enforcing fingerprint/vocab agreement
// between the manifest and all shards.
std::vector<TokenShard> load_corpus(const CorpusManifest& manifest);

// Document-level holdout split: documents (EOD-delimited) are shuffled by
// seed and floor(fraction * docs) of them form the test side.
std::pair<TokenShard, TokenShard> split_holdout(const TokenShard& shard, double fraction,
                                                uint64_t seed);

}  // namespace refbase
