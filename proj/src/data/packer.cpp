#include "data/packer.h"

#include "core/error.h"
#include "core/rng.h"

namespace refbase {

BatchStream::BatchStream(const std::vector<TokenShard>& shards, int64_t context_length,
                         int64_t global_batch_tokens, uint64_t seed)
    : context_(context_length), seed_(seed) {
  if (shards.empty()) throw DataError("packer: empty corpus (no shards)");
  if (context_length <= 0) throw ConfigError("packer: context_length must be > 0");
  if (global_batch_tokens <= 0 || global_batch_tokens % context_length != 0)
    throw ConfigError("packer: global_batch_tokens (" + std::to_string(global_batch_tokens) +
                      ") must be a positive multiple of context_length (" +
                      std::to_string(context_length) + ")");
  rows_ = global_batch_tokens / context_length;
  eod_id_ = shards[0].eod_id;
  const std::string& fp = shards[0].tokenizer_fingerprint;
  for (const auto& s : shards) {
    if (s.tokenizer_fingerprint != fp)
      throw DataError("packer: shard fingerprint '" + s.tokenizer_fingerprint +
                      "' does not match '" + fp + "'");
    stream_.insert(stream_.end(), s.tokens.begin(), s.tokens.end());
  }
  if (stream_.empty()) throw DataError("packer: empty corpus (no tokens)");
  n_chunks_ = static_cast<int64_t>(stream_.size()) / context_;
  usable_ = n_chunks_ * context_;
  if (n_chunks_ < rows_)
    throw DataError("packer: corpus of " + std::to_string(stream_.size()) +
                    " tokens is too small for a " + std::to_string(global_batch_tokens) +
                    "-token batch");
}

int64_t BatchStream::chunk_for(int64_t sample_index) const {
  const int64_t epoch = sample_index / n_chunks_;
  const int64_t within = sample_index % n_chunks_;
  for (const auto& [e, perm] : perm_cache_)
    if (e == epoch) return perm[static_cast<size_t>(within)];
  std::vector<int64_t> perm(static_cast<size_t>(n_chunks_));
  for (int64_t i = 0; i < n_chunks_; ++i) perm[static_cast<size_t>(i)] = i;
  Rng rng = Rng::from_stream(seed_, 0xDA7A0000ULL + static_cast<uint64_t>(epoch));
  rng.shuffle(perm);
  perm_cache_.emplace_back(epoch, std::move(perm));
  if (perm_cache_.size() > 4) perm_cache_.erase(perm_cache_.begin());
  return perm_cache_.back().second[static_cast<size_t>(within)];
}

Batch BatchStream::batch(int64_t iteration) const {
  if (iteration < 0) throw ConfigError("packer: negative iteration");
  Batch b;
  b.inputs = TokenTensor({rows_, context_}, std::vector<int32_t>(static_cast<size_t>(rows_ * context_)));
  b.targets = TokenTensor({rows_, context_}, std::vector<int32_t>(static_cast<size_t>(rows_ * context_)));
  b.eod_positions.resize(static_cast<size_t>(rows_));
  for (int64_t r = 0; r < rows_; ++r) {
    const int64_t chunk = chunk_for(iteration * rows_ + r);
    const int64_t base = chunk * context_;
    for (int64_t t = 0; t < context_; ++t) {
      const int32_t tok = stream_[static_cast<size_t>(base + t)];
      b.inputs.ids[static_cast<size_t>(r * context_ + t)] = tok;
      // shift by one within the packed stream; the stream wraps at the end
      b.targets.ids[static_cast<size_t>(r * context_ + t)] =
          stream_[static_cast<size_t>((base + t + 1) % usable_)];
      if (tok == eod_id_) b.eod_positions[static_cast<size_t>(r)].push_back(t);
    }
  }
  return b;
}

}  // namespace refbase
