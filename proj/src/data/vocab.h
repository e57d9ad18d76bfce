#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace refbase {

// External vocabulary descriptor. Real corpora arrive pre-tokenized (the
// byte-pair tokenizer itself is out of scope); this type carries the
// metadata the pipeline needs (padded size, EOD id, fingerprint) plus an
// optional exact word -> id map used by synthetic fixtures and text-form
// eval tasks.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::string name, std::string fingerprint, int32_t vocab_size, int32_t eod_id)
      : name_(std::move(name)), fingerprint_(std::move(fingerprint)),
        vocab_size_(vocab_size), eod_id_(eod_id) {}

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  const std::string& name() const { return name_; }
  const std::string& fingerprint() const { return fingerprint_; }
  int32_t vocab_size() const { return vocab_size_; }
  int32_t eod_id() const { return eod_id_; }

  void add_word(const std::string& word, int32_t id);
  bool has_words() const { return !word_to_id_.empty(); }

  // Whitespace-split exact-match encoding; unknown words are data errors.
  std::vector<int32_t> encode(const std::string& text) const;
  std::string decode(const std::vector<int32_t>& ids) const;

 private:
  std::string name_;
  std::string fingerprint_;
  int32_t vocab_size_ = 0;
  int32_t eod_id_ = 0;
  std::unordered_map<std::string, int32_t> word_to_id_;
  std::unordered_map<int32_t, std::string> id_to_word_;
};

}  // namespace refbase
