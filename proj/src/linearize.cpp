#include "synlm/linearize.hpp"

#include <algorithm>
#include <limits>

#include "synlm/error.hpp"

namespace synlm {

StackState::StackState(TreeForm form, Direction direction) : form_(form), direction_(direction) {}

void StackState::fail(const std::string& rule) const { throw IllegalAction(position_ - 1, rule); }

bool StackState::complete() const {
  return !ended_ && frames_.empty() && items_.size() == 1;
}

void StackState::push_item(StackItem item) {
  if (direction_ == Direction::kTopDown && !frames_.empty()) {
    frames_.back().children.push_back(item);
  } else {
    items_.push_back(item);
  }
}

void StackState::apply(const Action& a) {
  ++position_;
  last_closed_.reset();
  if (ended_) fail("sentence already ended");
  const bool top_down = direction_ == Direction::kTopDown;
  const bool binary = form_ == TreeForm::kBinary;

  switch (a.kind) {
    case ActionKind::kBos:
      fail("<bos> is not a parser action");

    case ActionKind::kEnd:
      if (!complete()) fail("END requires exactly one completed item");
      ended_ = true;
      break;

    case ActionKind::kGen: {
      if (top_down) {
        if (frames_.empty()) {
          if (!items_.empty() || tokens_ > 0) fail("token outside the completed tree");
        } else if (binary && frames_.back().children.size() >= 2) {
          fail("binary constituent already has two children");
        }
      }
      StackItem item;
      item.token = a.value;
      item.first_token = tokens_;
      item.end_token = tokens_ + 1;
      item.position = position_;
      item.first_position = position_;
      push_item(item);
      ++tokens_;
      consecutive_opens_ = 0;
      break;
    }

    case ActionKind::kOpen: {
      if (!top_down) fail("OPEN is not an action in bottom-up linearization");
      if (frames_.empty()) {
        if (!items_.empty() || tokens_ > 0) fail("OPEN after the root constituent");
      } else if (binary && frames_.back().children.size() >= 2) {
        fail("binary constituent already has two children");
      }
      frames_.push_back(Frame{position_, tokens_, {}});
      ++opened_;
      ++consecutive_opens_;
      break;
    }

    case ActionKind::kClose:
    case ActionKind::kCloseWithStart: {
      ClosedConstituent c;
      c.id = closed_;
      c.close_position = position_;
      if (top_down) {
        if (a.kind == ActionKind::kCloseWithStart) fail("start positions are only used bottom-up");
        if (frames_.empty()) fail("CLOSE with no open constituent");
        Frame f = std::move(frames_.back());
        frames_.pop_back();
        if (f.children.size() < 2) fail("constituent needs at least two children");
        c.open_position = f.open_position;
        c.first_position = f.open_position;
        c.children = std::move(f.children);
      } else {
        size_t from = 0;
        if (binary) {
          if (a.kind == ActionKind::kCloseWithStart) fail("binary bottom-up closes carry no start");
          if (items_.size() < 2) fail("binary CLOSE needs two stack items");
          from = items_.size() - 2;
        } else {
          if (a.kind != ActionKind::kCloseWithStart) fail("non-binary bottom-up CLOSE needs a start position");
          auto it = std::find_if(items_.begin(), items_.end(),
                                 [&](const StackItem& s) { return s.position == a.value; });
          if (it == items_.end()) fail("start position " + std::to_string(a.value) + " is not feasible");
          from = static_cast<size_t>(it - items_.begin());
        }
        c.children.assign(items_.begin() + static_cast<long>(from), items_.end());
        items_.resize(from);
        c.first_position = c.children.front().first_position;
      }
      c.first_token = c.children.front().first_token;
      c.end_token = c.children.back().end_token;
      StackItem item;
      item.constituent = true;
      item.constituent_id = c.id;
      item.first_token = c.first_token;
      item.end_token = c.end_token;
      item.position = position_;
      item.first_position = c.first_position;
      ++closed_;
      consecutive_opens_ = 0;
      push_item(item);
      last_closed_ = std::move(c);
      break;
    }

    case ActionKind::kDupClose:
      if (last_kind_ != ActionKind::kClose && last_kind_ != ActionKind::kCloseWithStart) {
        fail("duplicate ')' must directly follow a CLOSE");
      }
      break;
  }
  last_kind_ = a.kind;
}

std::vector<int> StackState::feasible_starts() const {
  if (items_.empty()) throw IllegalAction(position_, "feasible_starts on an empty stack");
  std::vector<int> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.position);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

class Linearizer {
 public:
  Linearizer(TreeForm form, Direction dir) : form_(form), dir_(dir) {}

  // Returns the representation position of `t`.
  int emit(const Tree& t) {
    if (t.is_leaf()) {
      out_.actions.push_back(Action::gen(t.token()));
      return ++pos_;
    }
    if (dir_ == Direction::kTopDown) {
      out_.actions.push_back(Action::open());
      ++pos_;
      for (const auto& c : t.children()) emit(c);
      out_.actions.push_back(Action::close());
      return ++pos_;
    }
    int first = -1;
    for (const auto& c : t.children()) {
      int p = emit(c);
      if (first < 0) first = p;
    }
    out_.actions.push_back(form_ == TreeForm::kBinary ? Action::close() : Action::close_at(first));
    return ++pos_;
  }

  ActionSeq take() { return std::move(out_); }

 private:
  TreeForm form_;
  Direction dir_;
  int pos_ = 0;
  ActionSeq out_;
};

}  // namespace

ActionSeq linearize(const Tree& t, TreeForm form, Direction direction) {
  if (form == TreeForm::kBinary && !t.is_binary()) {
    throw ConfigError("linearize: non-binary tree passed with form Bi");
  }
  if (!t.is_normalized()) throw ConfigError("linearize: tree has unary nonterminals; normalize first");
  Linearizer lin(form, direction);
  lin.emit(t);
  return lin.take();
}

Tree delinearize(const ActionSeq& seq, TreeForm form, Direction direction) {
  StackState state(form, direction);
  std::vector<Tree> built;
  auto subtree = [&](const StackItem& it) {
    return it.constituent ? built[static_cast<size_t>(it.constituent_id)] : Tree::leaf(it.token);
  };
  for (const auto& a : seq.actions) {
    if (a.kind == ActionKind::kEnd) break;
    state.apply(a);
    if (const auto& c = state.last_closed()) {
      std::vector<Tree> kids;
      kids.reserve(c->children.size());
      for (const auto& ch : c->children) kids.push_back(subtree(ch));
      built.push_back(Tree::node(std::move(kids)));
    }
  }
  if (!state.complete()) {
    throw IllegalAction(seq.size(), "sequence does not end with exactly one completed tree");
  }
  return subtree(state.items().front());
}

// ---------------------------------------------------------------------------

namespace {

constexpr long kUnbounded = std::numeric_limits<int>::max();

}  // namespace

bool completable(const StackState& s, const SearchLimits& limits) {
  const bool bounded_tokens = limits.tokens_remaining.has_value();
  const long r = bounded_tokens ? *limits.tokens_remaining : kUnbounded;
  if (r < 0) return false;
  if (s.ended()) return r == 0 || !bounded_tokens;
  const bool binary = s.form() == TreeForm::kBinary;

  if (s.direction() == Direction::kTopDown) {
    long opens_left = kUnbounded;
    if (limits.max_consecutive_opens && *limits.max_consecutive_opens <= 0) {
      opens_left = 0;
    } else if (limits.max_nonterminals) {
      opens_left = std::max(0, *limits.max_nonterminals - s.nonterminals());
    }
    const auto& frames = s.frames();
    if (frames.empty()) {
      if (!s.items().empty()) return r == 0 || !bounded_tokens;
      if (!bounded_tokens) return true;
      if (r == 0) return false;
      if (r == 1) return true;
      if (opens_left < 1) return false;
      return !binary || r <= opens_left + 1;
    }
    long need = std::max<long>(0, 2 - static_cast<long>(frames.back().children.size()));
    long cap = 2 - static_cast<long>(frames.back().children.size());
    for (size_t j = 0; j + 1 < frames.size(); ++j) {
      need += std::max<long>(0, 1 - static_cast<long>(frames[j].children.size()));
      cap += 1 - static_cast<long>(frames[j].children.size());
    }
    if (!bounded_tokens) return true;
    if (r < need) return false;
    if (!binary || r == cap) return true;
    // Every extra token needs an OPEN, and an OPEN needs a free slot.
    return cap >= 1 && (opens_left == kUnbounded || r <= cap + opens_left);
  }

  const long closes_left =
      limits.max_nonterminals ? std::max(0, *limits.max_nonterminals - s.nonterminals()) : kUnbounded;
  const long items = static_cast<long>(s.items().size());
  if (!bounded_tokens) {
    if (items == 0) return true;
    long need = binary ? items - 1 : (items >= 2 ? 1 : 0);
    return need <= closes_left;
  }
  const long total = items + r;
  if (total == 0) return false;
  long need = binary ? total - 1 : (total >= 2 ? 1 : 0);
  return need <= closes_left;
}

std::vector<Action> legal_actions(const StackState& s, const SearchLimits& limits) {
  std::vector<Action> out;
  if (s.ended()) return out;
  const bool top_down = s.direction() == Direction::kTopDown;
  const bool binary = s.form() == TreeForm::kBinary;
  const auto& r = limits.tokens_remaining;

  auto try_action = [&](const Action& a, const SearchLimits& after_limits) {
    StackState next = s;
    try {
      next.apply(a);
    } catch (const IllegalAction&) {
      return false;
    }
    return completable(next, after_limits);
  };

  if (s.complete() && (!r || *r == 0)) out.push_back(Action::end());

  const bool close_budget =
      top_down || !limits.max_nonterminals || s.nonterminals() < *limits.max_nonterminals;
  if (close_budget) {
    if (top_down) {
      if (!s.frames().empty() && s.frames().back().children.size() >= 2 && try_action(Action::close(), limits)) {
        out.push_back(Action::close());
      }
    } else if (binary) {
      if (s.items().size() >= 2 && try_action(Action::close(), limits)) out.push_back(Action::close());
    } else if (!s.items().empty()) {
      const auto& items = s.items();
      size_t last = limits.width1_starts ? items.size() : items.size() - 1;
      for (size_t i = 0; i < last; ++i) {
        Action a = Action::close_at(items[i].position);
        if (try_action(a, limits)) out.push_back(a);
      }
    }
  }

  if (!r || *r > 0) {
    SearchLimits after = limits;
    if (r) after.tokens_remaining = *r - 1;
    if (try_action(Action::gen(-1), after)) out.push_back(Action::gen(-1));
  }

  if (top_down) {
    bool budget = !limits.max_nonterminals || s.nonterminals() < *limits.max_nonterminals;
    bool streak = !limits.max_consecutive_opens || s.consecutive_opens() < *limits.max_consecutive_opens;
    if (budget && streak && try_action(Action::open(), limits)) out.push_back(Action::open());
  }
  return out;
}

}  // namespace synlm
