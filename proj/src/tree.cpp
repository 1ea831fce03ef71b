#include "synlm/tree.hpp"

#include <cctype>
#include <utility>

#include "synlm/error.hpp"

namespace synlm {

Tree Tree::leaf(int token) {
  Tree t;
  t.token_ = token;
  return t;
}

Tree Tree::node(std::vector<Tree> children, bool binarized) {
  if (children.empty()) throw ConfigError("nonterminal without children");
  Tree t;
  t.children_ = std::move(children);
  t.binarized_ = binarized;
  return t;
}

namespace {

void collect_tokens(const Tree& t, std::vector<int>& out) {
  if (t.is_leaf()) {
    out.push_back(t.token());
    return;
  }
  for (const auto& c : t.children()) collect_tokens(c, out);
}

}  // namespace

std::vector<int> Tree::tokens() const {
  std::vector<int> out;
  collect_tokens(*this, out);
  return out;
}

int Tree::token_count() const {
  if (is_leaf()) return 1;
  int n = 0;
  for (const auto& c : children_) n += c.token_count();
  return n;
}

int Tree::node_count() const {
  int n = 1;
  for (const auto& c : children_) n += c.node_count();
  return n;
}

int Tree::nonterminal_count() const {
  if (is_leaf()) return 0;
  int n = 1;
  for (const auto& c : children_) n += c.nonterminal_count();
  return n;
}

bool Tree::is_binary() const {
  if (is_leaf()) return true;
  if (children_.size() != 2) return false;
  return children_[0].is_binary() && children_[1].is_binary();
}

bool Tree::is_normalized() const {
  if (is_leaf()) return true;
  if (children_.size() == 1) return false;
  for (const auto& c : children_) {
    if (!c.is_normalized()) return false;
  }
  return true;
}

bool operator==(const Tree& a, const Tree& b) {
  if (a.is_leaf() != b.is_leaf()) return false;
  if (a.is_leaf()) return a.token_ == b.token_;
  if (a.children_.size() != b.children_.size()) return false;
  for (size_t i = 0; i < a.children_.size(); ++i) {
    if (!(a.children_[i] == b.children_[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct Lexeme {
  enum Kind { kOpen, kClose, kAtom } kind;
  std::string text;
  bool attached = false;  // atom directly follows "(" with no whitespace
};

std::vector<Lexeme> lex(std::string_view line) {
  std::vector<Lexeme> out;
  size_t i = 0;
  bool after_open = false;
  while (i < line.size()) {
    char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      after_open = false;
      ++i;
    } else if (c == '(') {
      out.push_back({Lexeme::kOpen, "(", false});
      after_open = true;
      ++i;
    } else if (c == ')') {
      out.push_back({Lexeme::kClose, ")", false});
      after_open = false;
      ++i;
    } else {
      size_t j = i;
      while (j < line.size() && line[j] != '(' && line[j] != ')' &&
             !std::isspace(static_cast<unsigned char>(line[j]))) {
        ++j;
      }
      out.push_back({Lexeme::kAtom, std::string(line.substr(i, j - i)), after_open});
      after_open = false;
      i = j;
    }
  }
  return out;
}

class BracketParser {
 public:
  BracketParser(std::vector<Lexeme> lexemes, Vocabulary& vocab)
      : lx_(std::move(lexemes)), vocab_(vocab) {}

  Tree parse() {
    if (lx_.empty()) throw ParseError("empty line: zero tokens");
    if (lx_.size() == 1 && lx_[0].kind == Lexeme::kAtom) {
      return Tree::leaf(vocab_.intern(lx_[0].text));
    }
    if (lx_[0].kind != Lexeme::kOpen) {
      throw ParseError("expected '(' at start of bracketed tree");
    }
    Tree t = parse_node();
    if (pos_ != lx_.size()) throw ParseError("unbalanced brackets: trailing input after tree");
    return t;
  }

 private:
  Tree parse_node() {
    ++pos_;  // "("
    if (pos_ < lx_.size() && lx_[pos_].kind == Lexeme::kAtom && lx_[pos_].attached) {
      ++pos_;  // label
    }
    std::vector<Tree> children;
    while (true) {
      if (pos_ >= lx_.size()) throw ParseError("unbalanced brackets: missing ')'");
      const auto& l = lx_[pos_];
      if (l.kind == Lexeme::kClose) {
        ++pos_;
        break;
      }
      if (l.kind == Lexeme::kOpen) {
        children.push_back(parse_node());
      } else {
        children.push_back(Tree::leaf(vocab_.intern(l.text)));
        ++pos_;
      }
    }
    if (children.empty()) throw ParseError("empty constituent");
    return Tree::node(std::move(children));
  }

  std::vector<Lexeme> lx_;
  Vocabulary& vocab_;
  size_t pos_ = 0;
};

}  // namespace

Tree parse_bracketed(std::string_view line, Vocabulary& vocab) {
  auto lexemes = lex(line);
  int closes = 0;
  int opens = 0;
  for (const auto& l : lexemes) {
    opens += l.kind == Lexeme::kOpen;
    closes += l.kind == Lexeme::kClose;
  }
  if (opens != closes) throw ParseError("unbalanced brackets");
  return BracketParser(std::move(lexemes), vocab).parse();
}

std::vector<int> parse_sentence(std::string_view line, Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& l : lex(line)) {
    if (l.kind != Lexeme::kAtom) throw ParseError("unexpected bracket in plain sentence");
    ids.push_back(vocab.intern(l.text));
  }
  if (ids.empty()) throw ParseError("empty line: zero tokens");
  return ids;
}

// ---------------------------------------------------------------------------
// Transforms

Tree normalize(const Tree& t) {
  if (t.is_leaf()) return t;
  const Tree* cur = &t;
  while (!cur->is_leaf() && cur->children().size() == 1) cur = &cur->children()[0];
  if (cur->is_leaf()) return *cur;
  std::vector<Tree> kids;
  kids.reserve(cur->children().size());
  for (const auto& c : cur->children()) kids.push_back(normalize(c));
  return Tree::node(std::move(kids), cur->binarized());
}

Tree left_binarize(const Tree& t) {
  if (t.is_leaf()) return t;
  auto kids = t.children();
  if (kids.size() == 1) return Tree::node({left_binarize(kids[0])}, t.binarized());
  Tree acc = left_binarize(kids[0]);
  for (size_t i = 1; i < kids.size(); ++i) {
    bool introduced = i + 1 < kids.size();
    bool marker = introduced ? true : t.binarized();
    acc = Tree::node({std::move(acc), left_binarize(kids[i])}, marker);
  }
  return acc;
}

namespace {

// Flattens the chain of marked left children under `t` into `out`.
void splice_marked(const Tree& t, std::vector<Tree>& out) {
  const auto kids = t.children();
  if (kids.size() != 2) throw ConfigError("debinarize_left requires a binary tree");
  if (kids[1].binarized()) throw ConfigError("binarization marker on a right child");
  if (!kids[0].is_leaf() && kids[0].binarized()) {
    splice_marked(kids[0], out);
  } else {
    out.push_back(debinarize_left(kids[0]));
  }
  out.push_back(debinarize_left(kids[1]));
}

}  // namespace

Tree debinarize_left(const Tree& t) {
  if (t.is_leaf()) return t;
  std::vector<Tree> kids;
  splice_marked(t, kids);
  return Tree::node(std::move(kids));
}

Tree make_left_branching(std::span<const int> tokens) {
  if (tokens.empty()) throw ConfigError("make_left_branching: empty token list");
  Tree acc = Tree::leaf(tokens[0]);
  for (size_t i = 1; i < tokens.size(); ++i) acc = Tree::node({std::move(acc), Tree::leaf(tokens[i])});
  return acc;
}

Tree make_right_branching(std::span<const int> tokens) {
  if (tokens.empty()) throw ConfigError("make_right_branching: empty token list");
  Tree acc = Tree::leaf(tokens.back());
  for (size_t i = tokens.size() - 1; i-- > 0;) acc = Tree::node({Tree::leaf(tokens[i]), std::move(acc)});
  return acc;
}

namespace {

void render(const Tree& t, const Vocabulary& vocab, std::string& out) {
  if (!out.empty()) out += ' ';
  if (t.is_leaf()) {
    out += vocab.word(t.token());
    return;
  }
  out += '(';
  for (const auto& c : t.children()) render(c, vocab, out);
  out += " )";
}

}  // namespace

std::string to_string(const Tree& t, const Vocabulary& vocab) {
  std::string out;
  render(t, vocab, out);
  return out;
}

}  // namespace synlm
