#pragma once

#include <optional>
#include <vector>

#include "synlm/action.hpp"
#include "synlm/tree.hpp"
#include "synlm/variant.hpp"

namespace synlm {

// A top-level element: a token or a closed constituent not yet subsumed.
struct StackItem {
  bool constituent = false;
  int token = -1;           // token items only
  int constituent_id = -1;  // constituent items only; order of closing
  int first_token = 0;      // span [first_token, end_token)
  int end_token = 0;
  int position = 0;        // representation position: the token or its ")"
  int first_position = 0;  // first sequence position covered by the item
};

// Emitted when an action closes a constituent.
struct ClosedConstituent {
  int id = -1;
  int open_position = 0;  // 0 in bottom-up mode
  int close_position = 0;
  int first_position = 0;
  int first_token = 0;
  int end_token = 0;
  std::vector<StackItem> children;
};

// Incremental parser state for one sentence. Positions are 1-based over the
// actions applied so far (duplicates included when replaying an augmented
// sequence), so the first action sits at position 1.
class StackState {
 public:
  StackState(TreeForm form, Direction direction);

  // Applies `a`; throws IllegalAction (step = index of `a`) when not allowed.
  void apply(const Action& a);

  TreeForm form() const { return form_; }
  Direction direction() const { return direction_; }

  int position() const { return position_; }
  int tokens() const { return tokens_; }
  // Nonterminals committed so far: opened in top-down mode, closed in bottom-up.
  int nonterminals() const { return direction_ == Direction::kTopDown ? opened_ : closed_; }
  int closed() const { return closed_; }
  int consecutive_opens() const { return consecutive_opens_; }
  bool ended() const { return ended_; }

  // Exactly one completed item and nothing open: END may follow.
  bool complete() const;

  // Top-level items: the bottom-up stack, or the finished root in top-down mode.
  const std::vector<StackItem>& items() const { return items_; }

  struct Frame {
    int open_position = 0;
    int first_token = 0;
    std::vector<StackItem> children;
  };
  // Open constituents, outermost first (top-down mode).
  const std::vector<Frame>& frames() const { return frames_; }

  // Positions at which a newly closed constituent may start: every top-level
  // item of the bottom-up stack, including the topmost one.
  std::vector<int> feasible_starts() const;

  // Set when the most recent action closed a constituent.
  const std::optional<ClosedConstituent>& last_closed() const { return last_closed_; }
  ActionKind last_kind() const { return last_kind_; }

 private:
  void push_item(StackItem item);
  [[noreturn]] void fail(const std::string& rule) const;

  TreeForm form_;
  Direction direction_;
  int position_ = 0;
  int tokens_ = 0;
  int opened_ = 0;
  int closed_ = 0;
  int consecutive_opens_ = 0;
  bool ended_ = false;
  ActionKind last_kind_ = ActionKind::kBos;
  std::vector<StackItem> items_;
  std::vector<Frame> frames_;
  std::optional<ClosedConstituent> last_closed_;
};

// Tree to actions: pre-order (top-down) or post-order (bottom-up). Bottom-up
// non-binary closes carry their start positions.
ActionSeq linearize(const Tree& t, TreeForm form, Direction direction);

// Actions to tree; throws IllegalAction naming the step and rule.
Tree delinearize(const ActionSeq& seq, TreeForm form, Direction direction);

struct SearchLimits {
  std::optional<int> max_nonterminals;       // n_c
  std::optional<int> max_consecutive_opens;  // p_c
  std::optional<int> tokens_remaining;       // set when the sentence is given
  bool width1_starts = true;                 // allow a start at the top item
};

// Actions that keep the prefix completable into a valid tree within limits,
// ordered END < CLOSE < GEN < OPEN (closes by ascending start). GEN is
// returned once with value -1, standing for any token.
std::vector<Action> legal_actions(const StackState& s, const SearchLimits& limits);

// True when some continuation reaches a valid tree within limits.
bool completable(const StackState& s, const SearchLimits& limits);

}  // namespace synlm
