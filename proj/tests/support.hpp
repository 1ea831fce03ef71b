#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "synlm/action.hpp"
#include "synlm/linearize.hpp"
#include "synlm/masking.hpp"
#include "synlm/tree.hpp"

namespace synlm::testing {

// Random tree over tokens first..first+n-1. Non-binary nodes get between 2
// and min(n, 5) children.
inline Tree random_tree(std::mt19937_64& rng, int n, bool binary, int first = 1) {
  if (n == 1) return Tree::leaf(first);
  int arity = 2;
  if (!binary) arity = std::uniform_int_distribution<int>(2, std::min(n, 5))(rng);
  // Choose arity-1 distinct cut points in 1..n-1.
  std::vector<int> cuts(static_cast<size_t>(n - 1));
  for (int i = 0; i < n - 1; ++i) cuts[static_cast<size_t>(i)] = i + 1;
  std::shuffle(cuts.begin(), cuts.end(), rng);
  cuts.resize(static_cast<size_t>(arity - 1));
  std::sort(cuts.begin(), cuts.end());
  std::vector<Tree> kids;
  int prev = 0;
  cuts.push_back(n);
  for (int c : cuts) {
    kids.push_back(random_tree(rng, c - prev, binary, first + prev));
    prev = c;
  }
  return Tree::node(std::move(kids));
}

// Every binary (or every normalized) tree over tokens first..first+n-1.
inline std::vector<Tree> all_trees(int n, bool binary, int first = 1) {
  if (n == 1) return {Tree::leaf(first)};
  std::vector<Tree> out;
  // Children sequences: compositions of n into >= 2 parts (exactly 2 if binary).
  std::function<void(int, int, std::vector<Tree>&)> rec = [&](int start, int left, std::vector<Tree>& kids) {
    if (left == 0) {
      if (kids.size() >= 2) out.push_back(Tree::node(kids));
      return;
    }
    if (binary && kids.size() == 2) return;
    for (int len = 1; len <= left; ++len) {
      if (kids.empty() && len == n) continue;
      if (binary && kids.size() == 1 && len != left) continue;
      for (const auto& sub : all_trees(len, binary, start)) {
        kids.push_back(sub);
        rec(start + len, left - len, kids);
        kids.pop_back();
      }
    }
  };
  std::vector<Tree> kids;
  rec(first, n, kids);
  return out;
}

inline long catalan(int n) {
  long c = 1;
  for (int i = 0; i < n; ++i) c = c * 2 * (2 * i + 1) / (i + 2);
  return c;
}

// A random action walk through legal_actions with `tokens` tokens. Picks
// uniformly among legal actions and replaces GEN(-1) by a random token.
inline ActionSeq random_walk(std::mt19937_64& rng, TreeForm form, Direction dir, int tokens,
                             const SearchLimits& base = {}, int vocab = 50) {
  StackState s(form, dir);
  ActionSeq seq;
  SearchLimits lim = base;
  int left = tokens;
  while (true) {
    lim.tokens_remaining = left;
    auto acts = legal_actions(s, lim);
    if (acts.empty()) break;
    Action a = acts[std::uniform_int_distribution<size_t>(0, acts.size() - 1)(rng)];
    if (a.kind == ActionKind::kEnd) break;
    if (a.kind == ActionKind::kGen) {
      a.value = std::uniform_int_distribution<int>(1, vocab)(rng);
      --left;
    }
    s.apply(a);
    seq.actions.push_back(a);
  }
  return seq;
}

// Document stream: <bos> then each sentence followed by END. Augments for
// internal composition when asked.
inline std::vector<Action> document_stream(const std::vector<ActionSeq>& sentences, bool internal) {
  std::vector<Action> s{Action::bos()};
  for (const auto& seq : sentences) {
    ActionSeq a = internal ? augment_for_internal(seq) : seq;
    s.insert(s.end(), a.actions.begin(), a.actions.end());
    s.push_back(Action::end());
  }
  return s;
}

// Emits <bos> + linearization (+ duplicates) of a tree and records, for each
// close position, the representation positions of its direct children and
// the first position it covers.
struct Emitted {
  std::vector<Action> stream{Action::bos()};
  std::map<int, std::vector<int>> children_of;
  std::map<int, int> first_of;
  std::vector<int> dups;
};

inline int emit(const Tree& t, TreeForm form, Direction dir, bool internal, Emitted& out) {
  auto next = [&](Action a) {
    out.stream.push_back(a);
    return static_cast<int>(out.stream.size()) - 1;
  };
  if (t.is_leaf()) return next(Action::gen(t.token()));
  int first = -1;
  if (dir == Direction::kTopDown) first = next(Action::open());
  std::vector<int> reps;
  for (const auto& c : t.children()) {
    const int before = static_cast<int>(out.stream.size());
    reps.push_back(emit(c, form, dir, internal, out));
    if (first < 0) first = before;
  }
  int close = next(dir == Direction::kTopDown || form == TreeForm::kBinary ? Action::close() : Action::close_at(reps[0]));
  out.children_of[close] = reps;
  out.first_of[close] = first;
  if (internal) out.dups.push_back(next(Action::dup()));
  return close;
}

inline Emitted emit_tree(const Tree& t, const VariantConfig& v) {
  Emitted e;
  emit(t, v.form, v.direction, v.composition == Composition::kInternal, e);
  return e;
}

}  // namespace synlm::testing
