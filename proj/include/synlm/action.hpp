#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "synlm/vocabulary.hpp"

namespace synlm {

enum class ActionKind {
  kBos,             // beginning of sequence; input only
  kOpen,            // "("
  kGen,             // generate a token
  kClose,           // ")"
  kCloseWithStart,  // ")" with a predicted start position (Nb-Up)
  kDupClose,        // duplicated ")" after an internal composition
  kEnd,             // sentence end
};

struct Action {
  ActionKind kind = ActionKind::kGen;
  // Token id for kGen, 1-based start position for kCloseWithStart, else -1.
  int value = -1;

  static Action bos() { return {ActionKind::kBos, -1}; }
  static Action open() { return {ActionKind::kOpen, -1}; }
  static Action gen(int token) { return {ActionKind::kGen, token}; }
  static Action close() { return {ActionKind::kClose, -1}; }
  static Action close_at(int start) { return {ActionKind::kCloseWithStart, start}; }
  static Action dup() { return {ActionKind::kDupClose, -1}; }
  static Action end() { return {ActionKind::kEnd, -1}; }

  bool is_close() const { return kind == ActionKind::kClose || kind == ActionKind::kCloseWithStart; }

  friend bool operator==(const Action&, const Action&) = default;
};

// A linearized sentence a_0..a_{L-1}. Start positions of kCloseWithStart
// actions are 1-based indexes into this same sequence.
struct ActionSeq {
  std::vector<Action> actions;

  int size() const { return static_cast<int>(actions.size()); }
  int token_count() const;
  int nonterminal_count() const;
  int dup_count() const;

  friend bool operator==(const ActionSeq&, const ActionSeq&) = default;
};

// Renders "( Write an ) essay )"; starts as ")@i" when `with_starts` is set,
// duplicates as ")'", and <bos>/<end> literally.
std::string to_string(const ActionSeq& seq, const Vocabulary& vocab, bool with_starts = true);
std::string to_string(const Action& a, const Vocabulary& vocab, bool with_starts = true);

// Inverse of to_string. Tokens are interned into `vocab`.
ActionSeq parse_actions(std::string_view text, Vocabulary& vocab);

}  // namespace synlm
