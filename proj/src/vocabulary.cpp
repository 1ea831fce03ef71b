#include "synlm/vocabulary.hpp"

#include <algorithm>

#include "synlm/error.hpp"

namespace synlm {

WordVocabulary::WordVocabulary() {
  words_.emplace_back(kUnknownWord);
  index_.emplace(kUnknownWord, kUnknown);
}

WordVocabulary WordVocabulary::from_counts(const std::map<std::string, int>& counts,
                                           int min_count) {
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [w, c] : counts) {
    if (c >= min_count && w != kUnknownWord) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  WordVocabulary v;
  for (const auto& [w, c] : kept) v.intern(w);
  v.freeze();
  return v;
}

WordVocabulary WordVocabulary::from_words(const std::vector<std::string>& words) {
  WordVocabulary v;
  for (const auto& w : words) v.intern(w);
  v.freeze();
  return v;
}

int WordVocabulary::lookup(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnknown : it->second;
}

int WordVocabulary::intern(std::string_view word) {
  auto key = std::string(word);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  if (frozen_) return kUnknown;
  int id = size();
  words_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

const std::string& WordVocabulary::word(int id) const {
  if (id < 0 || id >= size()) throw ConfigError("token id out of range: " + std::to_string(id));
  return words_[static_cast<size_t>(id)];
}

}  // namespace synlm
