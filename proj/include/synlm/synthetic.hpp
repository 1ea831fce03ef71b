#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "synlm/tree.hpp"
#include "synlm/vocabulary.hpp"

namespace synlm {

struct GrammarRule {
  std::vector<std::string> rhs;
  double prob = 0.0;
};

// Probabilistic phrase grammar. Symbols with rules are nonterminals; every
// other symbol is a word.
//
// Text form, one left-hand side per line:
//   S -> NP_sg VP_sg [0.5] | NP_pl VP_pl [0.5]
//   N_sg -> dog | cat
// Alternatives without a bracketed probability share the remaining mass
// equally. Lines starting with '#' are comments. The first left-hand side
// is the start symbol.
struct Grammar {
  std::string start;
  std::map<std::string, std::vector<GrammarRule>> rules;
  std::vector<std::string> order;  // left-hand sides in declaration order

  static Grammar parse(std::string_view text);
  static Grammar builtin();

  bool is_nonterminal(const std::string& sym) const { return rules.count(sym) != 0; }
  // Words in first-appearance order.
  std::vector<std::string> terminals() const;
  // Words of a category whose alternatives are all single words.
  std::vector<std::string> expansions(const std::string& lhs) const;
};

// Samples one tree. Every nonterminal becomes a bracket and the result is
// normalized, so preterminal and other unary brackets disappear. Throws
// RuntimeFailure when the expansion depth exceeds max_depth.
Tree sample_tree(const Grammar& g, std::mt19937_64& rng, Vocabulary& vocab, int max_depth = 60);

// Interns the whole lexicon first so ids do not depend on the sample.
std::vector<Tree> generate_synthetic_corpus(const Grammar& g, int n, uint64_t seed, WordVocabulary& vocab,
                                            int max_depth = 60);

struct LengthMoments {
  double mean = 0.0;
  double variance = 0.0;
};

// Exact mean and variance of the sentence length implied by the rule
// probabilities. Throws ConfigError when the expected length is infinite.
LengthMoments length_moments(const Grammar& g);

// Agreement probe: after `prefix`, `good` agrees with the subject and
// `bad` is the same verb with the other number.
struct ProbeItem {
  std::vector<int> prefix;
  int good = 0;
  int bad = 0;
};

// Subjects carry a prepositional attractor of the opposite number, e.g.
// "the dog near the cats" + runs / run. Needs the builtin category names.
std::vector<ProbeItem> agreement_probes(const Grammar& g, Vocabulary& vocab, int n, uint64_t seed);

}  // namespace synlm
