#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synlm/vocabulary.hpp"

namespace synlm {

// Unlabeled constituency tree. A leaf holds a token id; a nonterminal holds
// an ordered child list. Nodes introduced by left binarization carry a
// marker so that binarization can be undone exactly.
class Tree {
 public:
  static Tree leaf(int token);
  static Tree node(std::vector<Tree> children, bool binarized = false);

  bool is_leaf() const { return children_.empty(); }
  int token() const { return token_; }
  std::span<const Tree> children() const { return children_; }
  bool binarized() const { return binarized_; }

  std::vector<int> tokens() const;
  int token_count() const;
  int node_count() const;
  int nonterminal_count() const;
  bool is_binary() const;
  // True when no nonterminal has exactly one child.
  bool is_normalized() const;

  // Structural equality over shape and tokens; binarization markers are ignored.
  friend bool operator==(const Tree& a, const Tree& b);

 private:
  int token_ = -1;
  std::vector<Tree> children_;
  bool binarized_ = false;
};

// Parses one bracketed tree. Labels written directly after "(" are dropped;
// tokens are interned into `vocab`. A single bare atom parses as a leaf.
Tree parse_bracketed(std::string_view line, Vocabulary& vocab);

// Splits a plain sentence into token ids.
std::vector<int> parse_sentence(std::string_view line, Vocabulary& vocab);

// Removes every unary nonterminal; a unary chain over a leaf becomes the leaf.
Tree normalize(const Tree& t);

// Left binarization: children c1..cm become ((..(c1 c2) c3)..) cm). The
// introduced nodes are marked.
Tree left_binarize(const Tree& t);

// Inverse of left_binarize. Marked nodes are spliced into their parent.
// Throws ConfigError on non-binary input or on a marker that left_binarize
// could not have produced.
Tree debinarize_left(const Tree& t);

Tree make_left_branching(std::span<const int> tokens);
Tree make_right_branching(std::span<const int> tokens);

// "( ( Write an ) essay )"; a bare leaf renders as its token.
std::string to_string(const Tree& t, const Vocabulary& vocab);

}  // namespace synlm
