#pragma once

#include <cstdint>
#include <vector>

#include "core/tensor.h"
#include "data/shard.h"

namespace refbase {

// One packed training batch. Targets are the inputs shifted by one within
// the packed stream (the final target of the last chunk wraps to the
// stream head). Document boundaries are the positions holding EOD.
struct Batch {
  TokenTensor inputs;   // (batch, context)
  TokenTensor targets;  // (batch, context)
  std::vector<std::vector<int64_t>> eod_positions;  // per row
};

// Deterministic concatenate-and-chunk packer. The shard streams are joined,
// cut into context-length chunks, and chunk order is shuffled per epoch from
// the seed. Batches are pure functions of (corpus, geometry, seed,
// iteration): any iteration can be recomputed without replaying, which is
// what makes training resumption exact. Cross-document attention is not
// masked; documents are separated by EOD only.
class BatchStream {
 public:
  BatchStream(const std::vector<TokenShard>& shards, int64_t context_length,
              int64_t global_batch_tokens, uint64_t seed);

  Batch batch(int64_t iteration) const;

  int64_t context_length() const { return context_; }
  int64_t global_batch_tokens() const { return context_ * rows_; }
  int64_t rows() const { return rows_; }
  // chunks (= iterations * rows) per full pass over the corpus
  int64_t chunks_per_epoch() const { return n_chunks_; }
  int64_t batches_per_epoch() const { return n_chunks_ / rows_; }
  int64_t total_tokens() const { return static_cast<int64_t>(stream_.size()); }
  int32_t eod_id() const { return eod_id_; }

 private:
  int64_t chunk_for(int64_t sample_index) const;

  std::vector<int32_t> stream_;
  int64_t context_ = 0;
  int64_t rows_ = 0;
  int64_t n_chunks_ = 0;
  int64_t usable_ = 0;
  int32_t eod_id_ = 0;
  uint64_t seed_ = 0;
  // per-epoch chunk permutations are derived lazily and memoized
  mutable std::vector<std::pair<int64_t, std::vector<int64_t>>> perm_cache_;
};

}  // namespace refbase
