#include "data/vocab.h"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "core/binio.h"
#include "core/error.h"

namespace refbase {

Vocabulary Vocabulary::load(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("vocabulary " + path + ": " + e.what());
  }
  try {
    Vocabulary v(j.at("name").get<std::string>(), j.at("fingerprint").get<std::string>(),
                 j.at("vocab_size").get<int32_t>(), j.at("eod_id").get<int32_t>());
    if (j.contains("words"))
      for (auto& [word, id] : j.at("words").items())
        v.add_word(word, id.get<int32_t>());
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("vocabulary " + path + ": " + e.what());
  }
}

void Vocabulary::save(const std::string& path) const {
  nlohmann::json j;
  j["name"] = name_;
  j["fingerprint"] = fingerprint_;
  j["vocab_size"] = vocab_size_;
  j["eod_id"] = eod_id_;
  nlohmann::json words = nlohmann::json::object();
  for (const auto& [word, id] : word_to_id_) words[word] = id;
  j["words"] = words;
  write_file_atomic(path, j.dump(2) + "\n");
}

void Vocabulary::add_word(const std::string& word, int32_t id) {
  if (id < 0 || id >= vocab_size_)
    throw DataError("vocabulary: id " + std::to_string(id) + " for '" + word +
                    "' outside [0," + std::to_string(vocab_size_) + ")");
  word_to_id_[word] = id;
  id_to_word_[id] = word;
}

std::vector<int32_t> Vocabulary::encode(const std::string& text) const {
  std::vector<int32_t> ids;
  std::istringstream is(text);
  std::string word;
  while (is >> word) {
    auto it = word_to_id_.find(word);
    if (it == word_to_id_.end())
      throw DataError("vocabulary '" + name_ + "': unknown word '" + word + "'");
    ids.push_back(it->second);
  }
  return ids;
}

std::string Vocabulary::decode(const std::vector<int32_t>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    auto it = id_to_word_.find(ids[i]);
    if (it == id_to_word_.end())
      throw DataError("vocabulary '" + name_ + "': no word for id " + std::to_string(ids[i]));
    if (i) out += ' ';
    out += it->second;
  }
  return out;
}

}  // namespace refbase
