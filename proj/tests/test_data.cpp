#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "data/packer.h"
#include "data/shard.h"
#include "data/synth.h"
#include "data/vocab.h"
#include "support.h"

using namespace refbase;
using testutil::TmpDir;

namespace {

TokenShard make_shard(int64_t tokens, uint32_t vocab = 512, uint64_t seed = 1) {
  TokenShard s;
  s.vocab_size = vocab;
  s.eod_id = 0;
  s.tokenizer_fingerprint = "test-fp";
  Rng rng(seed);
  for (int64_t i = 0; i < tokens; ++i) {
    // sprinkle EOD every ~40 tokens so documents exist
    s.tokens.push_back(rng.below(40) == 0 ? 0 : static_cast<int32_t>(1 + rng.below(vocab - 1)));
  }
  return s;
}

uint64_t stream_hash(const BatchStream& stream, int64_t batches) {
  uint64_t h = 1469598103934665603ULL;
  for (int64_t b = 0; b < batches; ++b) {
    const Batch batch = stream.batch(b);
    for (int32_t t : batch.inputs.ids) {
      h ^= static_cast<uint64_t>(t);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace

TEST_CASE("shard files round-trip bit-exactly") {
  TmpDir tmp("shard");
  const TokenShard shard = make_shard(5000);
  const std::string path = tmp.file("a.bin");
  shard.write(path);
  const TokenShard back = TokenShard::read(path);
  CHECK(back.tokens == shard.tokens);
  CHECK(back.vocab_size == shard.vocab_size);
  CHECK(back.eod_id == shard.eod_id);
  CHECK(back.tokenizer_fingerprint == shard.tokenizer_fingerprint);

  // write -> read -> write is byte-identical
  const std::string path2 = tmp.file("b.bin");
  back.write(path2);
  CHECK(testutil::file_hash(path) == testutil::file_hash(path2));
}

TEST_CASE("truncated or corrupted shards are rejected by the crc") {
  TmpDir tmp("shard-crc");
  const std::string path = tmp.file("a.bin");
  make_shard(2000).write(path);
  std::string bytes = read_file_bytes(path);

  write_file_atomic(path, bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS_WITH_AS(TokenShard::read(path), doctest::Contains("CRC"), IoError);

  bytes[100] = static_cast<char>(bytes[100] ^ 0x20);
  write_file_atomic(path, bytes);
  CHECK_THROWS_AS(TokenShard::read(path), IoError);
}

TEST_CASE("shards validate token ids against the vocab") {
  TokenShard s = make_shard(100);
  s.tokens[50] = 600;  // vocab is 512
  TmpDir tmp("shard-ids");
  CHECK_THROWS_WITH_AS(s.write(tmp.file("bad.bin")), doctest::Contains("position 50"),
                       DataError);
}

TEST_CASE("packing arithmetic: 10240 tokens at context 2048 give 5 batches per pass") {
  TokenShard s = make_shard(10240);
  BatchStream stream({s}, 2048, 2048, 9);
  CHECK(stream.batches_per_epoch() == 5);
  CHECK(stream.chunks_per_epoch() == 5);
  const Batch b = stream.batch(0);
  CHECK(b.inputs.shape == Shape{1, 2048});
  CHECK(b.targets.shape == Shape{1, 2048});
}

TEST_CASE("an epoch pass visits every chunk exactly once") {
  TokenShard s = make_shard(8 * 64);
  BatchStream stream({s}, 64, 2 * 64, 17);
  CHECK(stream.batches_per_epoch() == 4);
  std::set<int32_t> seen_first_tokens;
  std::multiset<int32_t> all;
  for (int64_t it = 0; it < 4; ++it) {
    const Batch b = stream.batch(it);
    for (int32_t t : b.inputs.ids) all.insert(t);
  }
  std::multiset<int32_t> expected(s.tokens.begin(), s.tokens.end());
  CHECK(all == expected);  // same token multiset, shuffled chunk order
  (void)seen_first_tokens;
}

TEST_CASE("targets are the inputs shifted by one within the packed stream") {
  TokenShard s = make_shard(4 * 32);
  BatchStream stream({s}, 32, 32, 3);
  for (int64_t it = 0; it < 4; ++it) {
    const Batch b = stream.batch(it);
    for (int64_t t = 0; t + 1 < 32; ++t)
      CHECK(b.targets.ids[static_cast<size_t>(t)] == b.inputs.ids[static_cast<size_t>(t + 1)]);
  }
}

TEST_CASE("two streams with one seed are bit-identical, different seeds differ") {
  TokenShard s = make_shard(40960);
  BatchStream a({s}, 128, 512, 1234);
  BatchStream b({s}, 128, 512, 1234);
  BatchStream c({s}, 128, 512, 4321);
  CHECK(stream_hash(a, 20) == stream_hash(b, 20));
  CHECK(stream_hash(a, 20) != stream_hash(c, 20));
}

TEST_CASE("batches are a pure function of the iteration index") {
  TokenShard s = make_shard(40960);
  BatchStream stream({s}, 128, 512, 5);
  const Batch late = stream.batch(37);
  BatchStream fresh({s}, 128, 512, 5);
  CHECK(fresh.batch(37).inputs.ids == late.inputs.ids);  // no replay needed
}

TEST_CASE("eod positions mark document boundaries") {
  TokenShard s;
  s.vocab_size = 16;
  s.eod_id = 0;
  s.tokenizer_fingerprint = "fp";
  s.tokens = {1, 2, 0, 3, 4, 5, 0, 6};
  BatchStream stream({s}, 8, 8, 1);
  const Batch b = stream.batch(0);
  CHECK(b.eod_positions[0] == std::vector<int64_t>{2, 6});
}

TEST_CASE("packer rejects mismatched shards and empty corpora") {
  TokenShard a = make_shard(1000);
  TokenShard b = make_shard(1000);
  b.tokenizer_fingerprint = "other-fp";
  CHECK_THROWS_WITH_AS(BatchStream({a, b}, 64, 64, 1), doctest::Contains("fingerprint"),
                       DataError);
  CHECK_THROWS_AS(BatchStream({}, 64, 64, 1), DataError);
  CHECK_THROWS_AS(BatchStream({a}, 64, 100, 1), ConfigError);  // gbs not a multiple
  CHECK_THROWS_AS(BatchStream({make_shard(63)}, 64, 64, 1), DataError);  // too small
}

TEST_CASE("token budget accounting is exact") {
  TokenShard s = make_shard(8192);
  BatchStream stream({s}, 64, 256, 2);
  // k iterations consume exactly k * gbs input tokens
  int64_t consumed = 0;
  for (int64_t it = 0; it < 10; ++it) consumed += stream.batch(it).inputs.size();
  CHECK(consumed == 10 * 256);
}

TEST_CASE("holdout split is document-level, disjoint, and seed-stable") {
  // 100 documents of 10 tokens each (9 words + eod)
  TokenShard s;
  s.vocab_size = 256;
  s.eod_id = 0;
  s.tokenizer_fingerprint = "fp";
  for (int d = 0; d < 100; ++d) {
    for (int t = 0; t < 9; ++t) s.tokens.push_back(1 + (d * 9 + t) % 255);
    s.tokens.push_back(0);
  }
  auto [train, test] = split_holdout(s, 0.1, 42);
  auto count_docs = [](const TokenShard& sh) {
    int64_t docs = 0;
    for (int32_t t : sh.tokens) docs += t == 0;
    return docs;
  };
  CHECK(count_docs(train) == 90);
  CHECK(count_docs(test) == 10);
  CHECK(train.tokens.size() + test.tokens.size() == s.tokens.size());

  // union of the splits is the original multiset; same seed reproduces
  std::multiset<int32_t> whole(s.tokens.begin(), s.tokens.end());
  std::multiset<int32_t> split_union(train.tokens.begin(), train.tokens.end());
  split_union.insert(test.tokens.begin(), test.tokens.end());
  CHECK(whole == split_union);

  auto [train2, test2] = split_holdout(s, 0.1, 42);
  CHECK(train2.tokens == train.tokens);
  CHECK(test2.tokens == test.tokens);
  auto [train3, test3] = split_holdout(s, 0.1, 43);
  CHECK(train3.tokens != train.tokens);
}

TEST_CASE("holdout split rejects degenerate fractions") {
  TokenShard s = make_shard(500);
  CHECK_THROWS_AS(split_holdout(s, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_holdout(s, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(split_holdout(s, 0.0001, 1), DataError);  // empty test side
}

TEST_CASE("corpus manifest enforces fingerprint agreement") {
  TmpDir tmp("corpus");
  TokenShard a = make_shard(1000, 512, 1);
  TokenShard b = make_shard(1000, 512, 2);
  b.tokenizer_fingerprint = "rogue";
  a.write(tmp.file("a.bin"));
  b.write(tmp.file("b.bin"));
  CorpusManifest m;
  m.dataset_label = "test";
  m.tokenizer_fingerprint = "test-fp";
  m.vocab_size = 512;
  m.eod_id = 0;
  m.shard_paths = {tmp.file("a.bin"), tmp.file("b.bin")};
  CHECK_THROWS_WITH_AS(load_corpus(m), doctest::Contains("fingerprint"), DataError);
  m.shard_paths = {tmp.file("a.bin")};
  CHECK(load_corpus(m).size() == 1);
}

TEST_CASE("synthetic corpus is deterministic and learnably structured") {
  SynthCorpusSpec spec;
  spec.n_tokens = 20000;
  spec.vocab_size = 1024;
  spec.n_shards = 2;
  spec.seed = 11;
  const SynthCorpus a = make_synth_corpus(spec);
  const SynthCorpus b = make_synth_corpus(spec);
  CHECK(a.shards.size() == 2);
  int64_t total = 0;
  for (size_t i = 0; i < a.shards.size(); ++i) {
    CHECK(a.shards[i].tokens == b.shards[i].tokens);
    total += a.shards[i].token_count();
  }
  CHECK(total == 20000);
  // documents end with EOD and ids respect the vocab
  for (const auto& s : a.shards) {
    s.check_ids();
    CHECK(s.tokens.back() == 0);
  }
}

TEST_CASE("word vocabulary encodes and decodes exactly") {
  Vocabulary v("t", "fp", 100, 0);
  v.add_word("<eod>", 0);
  v.add_word("hello", 5);
  v.add_word("world", 7);
  CHECK(v.encode("hello world hello") == std::vector<int32_t>{5, 7, 5});
  CHECK(v.decode({7, 5}) == "world hello");
  CHECK_THROWS_WITH_AS(v.encode("hello there"), doctest::Contains("there"), DataError);
  CHECK_THROWS_AS(v.add_word("big", 100), DataError);

  TmpDir tmp("vocab");
  v.save(tmp.file("v.json"));
  const Vocabulary back = Vocabulary::load(tmp.file("v.json"));
  CHECK(back.vocab_size() == 100);
  CHECK(back.encode("world") == std::vector<int32_t>{7});
}
