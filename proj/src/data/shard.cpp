#include "data/shard.h"

#include <cstring>
#include <filesystem>
#include <json.hpp>

#include "core/binio.h"
#include "core/error.h"
#include "core/rng.h"

namespace refbase {

void TokenShard::check_ids() const {
  for (size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] < 0 || static_cast<uint32_t>(tokens[i]) >= vocab_size)
      throw DataError("shard: token id " + std::to_string(tokens[i]) + " at position " +
                      std::to_string(i) + " outside vocab " + std::to_string(vocab_size));
}

void TokenShard::write(const std::string& path) const {
  check_ids();
  ByteWriter w;
  w.raw(kMagic, 8);
  w.u32(kVersion);
  w.u32(kTokenWidth);
  w.u64(static_cast<uint64_t>(tokens.size()));
  w.u32(vocab_size);
  w.u32(static_cast<uint32_t>(eod_id));
  w.str(tokenizer_fingerprint);
  w.span(tokens.data(), tokens.size());
  w.write_file(path);
}

TokenShard TokenShard::read(const std::string& path) {
  ByteReader r = ByteReader::open_checked(path);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw IoError(path + ": not a token shard (bad magic)");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError(path + ": unsupported shard version " + std::to_string(version));
  const uint32_t width = r.u32();
  if (width != kTokenWidth)
    throw IoError(path + ": unsupported token width " + std::to_string(width));
  const uint64_t count = r.u64();
  TokenShard shard;
  shard.vocab_size = r.u32();
  shard.eod_id = static_cast<int32_t>(r.u32());
  shard.tokenizer_fingerprint = r.str();
  shard.tokens = r.span<int32_t>(count);
  if (r.remaining() != 0) throw IoError(path + ": trailing bytes after payload");
  shard.check_ids();
  return shard;
}

void CorpusManifest::save(const std::string& path) const {
  nlohmann::json j;
  j["dataset_label"] = dataset_label;
  j["tokenizer_fingerprint"] = tokenizer_fingerprint;
  j["vocab_size"] = vocab_size;
  j["eod_id"] = eod_id;
  j["shards"] = shard_paths;
  write_file_atomic(path, j.dump(2) + "\n");
}

CorpusManifest CorpusManifest::load(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corpus manifest " + path + ": " + e.what());
  }
  CorpusManifest m;
  try {
    m.dataset_label = j.at("dataset_label").get<std::string>();
    m.tokenizer_fingerprint = j.at("tokenizer_fingerprint").get<std::string>();
    m.vocab_size = j.at("vocab_size").get<uint32_t>();
    m.eod_id = j.at("eod_id").get<int32_t>();
    for (const auto& p : j.at("shards")) {
      std::filesystem::path sp = p.get<std::string>();
      if (sp.is_relative()) sp = std::filesystem::path(path).parent_path() / sp;
      m.shard_paths.push_back(sp.string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corpus manifest " + path + ": " + e.what());
  }
  return m;
}

std::vector<TokenShard> load_corpus(const CorpusManifest& manifest) {
  if (manifest.shard_paths.empty()) throw DataError("corpus: manifest lists no shards");
  std::vector<TokenShard> shards;
  for (const auto& path : manifest.shard_paths) {
    TokenShard s = TokenShard::read(path);
    if (s.tokenizer_fingerprint != manifest.tokenizer_fingerprint)
      throw DataError("corpus: shard " + path + " fingerprint '" + s.tokenizer_fingerprint +
                      "' does not match manifest '" + manifest.tokenizer_fingerprint + "'");
    if (s.vocab_size != manifest.vocab_size)
      throw DataError("corpus: shard " + path + " vocab " + std::to_string(s.vocab_size) +
                      " does not match manifest " + std::to_string(manifest.vocab_size));
    shards.push_back(std::move(s));
  }
  return shards;
}

std::pair<TokenShard, TokenShard> split_holdout(const TokenShard& shard, double fraction,
                                                uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split_holdout: fraction must be in (0,1)");
  // document = tokens up to and including an EOD separator
  std::vector<std::pair<size_t, size_t>> docs;
  size_t begin = 0;
  for (size_t i = 0; i < shard.tokens.size(); ++i) {
    if (shard.tokens[i] == shard.eod_id) {
      docs.emplace_back(begin, i + 1);
      begin = i + 1;
    }
  }
  if (begin < shard.tokens.size()) docs.emplace_back(begin, shard.tokens.size());
  if (docs.size() < 2) throw DataError("split_holdout: need at least 2 documents");

  const size_t n_test = static_cast<size_t>(fraction * static_cast<double>(docs.size()));
  if (n_test == 0 || n_test == docs.size())
    throw DataError("split_holdout: fraction " + std::to_string(fraction) +
                    " leaves an empty side for " + std::to_string(docs.size()) + " documents");

  std::vector<size_t> order(docs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::from_stream(seed, 0x5917);
  rng.shuffle(order);

  std::vector<bool> is_test(docs.size(), false);
  for (size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

  TokenShard train = shard, test = shard;
  train.tokens.clear();
  test.tokens.clear();
  for (size_t d = 0; d < docs.size(); ++d) {
    auto& dst = is_test[d] ? test : train;
    dst.tokens.insert(dst.tokens.end(), shard.tokens.begin() + static_cast<int64_t>(docs[d].first),
                      shard.tokens.begin() + static_cast<int64_t>(docs[d].second));
  }
  return {std::move(train), std::move(test)};
}

}  // namespace refbase
