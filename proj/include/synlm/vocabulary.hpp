#pragma once

#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace synlm {

// Maps surface tokens to dense ids. Id 0 is always the unknown token.
class Vocabulary {
 public:
  virtual ~Vocabulary() = default;

  // Returns the id of `word`, or kUnknown if it is not in the vocabulary.
  virtual int lookup(std::string_view word) const = 0;
  // Returns the id of `word`, adding it when the vocabulary is still growable.
  virtual int intern(std::string_view word) = 0;
  virtual const std::string& word(int id) const = 0;
  virtual int size() const = 0;

  static constexpr int kUnknown = 0;
};

// Word-level vocabulary with an optional frequency cutoff.
class WordVocabulary final : public Vocabulary {
 public:
  WordVocabulary();

  // Builds a frozen vocabulary keeping words seen at least `min_count` times.
  // Ties in frequency are ordered lexicographically so ids are deterministic.
  static WordVocabulary from_counts(const std::map<std::string, int>& counts, int min_count);
  static WordVocabulary from_words(const std::vector<std::string>& words);

  int lookup(std::string_view word) const override;
  int intern(std::string_view word) override;
  const std::string& word(int id) const override;
  int size() const override { return static_cast<int>(words_.size()); }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  const std::vector<std::string>& words() const { return words_; }

  static constexpr const char* kUnknownWord = "<unk>";

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  bool frozen_ = false;
};

}  // namespace synlm
