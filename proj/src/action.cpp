#include "synlm/action.hpp"

#include <sstream>

#include "synlm/error.hpp"

namespace synlm {

int ActionSeq::token_count() const {
  int n = 0;
  for (const auto& a : actions) n += a.kind == ActionKind::kGen;
  return n;
}

int ActionSeq::nonterminal_count() const {
  int n = 0;
  for (const auto& a : actions) n += a.is_close();
  return n;
}

int ActionSeq::dup_count() const {
  int n = 0;
  for (const auto& a : actions) n += a.kind == ActionKind::kDupClose;
  return n;
}

std::string to_string(const Action& a, const Vocabulary& vocab, bool with_starts) {
  switch (a.kind) {
    case ActionKind::kBos: return "<bos>";
    case ActionKind::kOpen: return "(";
    case ActionKind::kGen: return vocab.word(a.value);
    case ActionKind::kClose: return ")";
    case ActionKind::kCloseWithStart: return with_starts ? ")@" + std::to_string(a.value) : ")";
    case ActionKind::kDupClose: return ")'";
    case ActionKind::kEnd: return "<end>";
  }
  return "?";
}

std::string to_string(const ActionSeq& seq, const Vocabulary& vocab, bool with_starts) {
  std::string out;
  for (const auto& a : seq.actions) {
    if (!out.empty()) out += ' ';
    out += to_string(a, vocab, with_starts);
  }
  return out;
}

ActionSeq parse_actions(std::string_view text, Vocabulary& vocab) {
  ActionSeq seq;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) {
    if (tok == "(") {
      seq.actions.push_back(Action::open());
    } else if (tok == ")") {
      seq.actions.push_back(Action::close());
    } else if (tok == ")'") {
      seq.actions.push_back(Action::dup());
    } else if (tok == "<bos>") {
      seq.actions.push_back(Action::bos());
    } else if (tok == "<end>") {
      seq.actions.push_back(Action::end());
    } else if (tok.rfind(")@", 0) == 0) {
      try {
        seq.actions.push_back(Action::close_at(std::stoi(tok.substr(2))));
      } catch (const std::exception&) {
        throw ParseError("bad start annotation '" + tok + "'");
      }
    } else {
      seq.actions.push_back(Action::gen(vocab.intern(tok)));
    }
  }
  return seq;
}

}  // namespace synlm
