#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "synlm/action.hpp"
#include "synlm/linearize.hpp"
#include "synlm/variant.hpp"

namespace synlm {

// Square attention-permission matrix: (q, k) is true when query step q may
// attend key step k. Rows of internal compositions are flagged.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  explicit MaskMatrix(int n) : n_(n), cells_(static_cast<size_t>(n) * n, 0), composition_(n, 0) {}

  int size() const { return n_; }
  bool operator()(int q, int k) const { return cells_[index(q, k)] != 0; }
  void set(int q, int k, bool v) { cells_[index(q, k)] = v ? 1 : 0; }
  bool composition_row(int q) const { return composition_[static_cast<size_t>(q)] != 0; }
  void set_composition_row(int q, bool v) { composition_[static_cast<size_t>(q)] = v ? 1 : 0; }

  friend bool operator==(const MaskMatrix&, const MaskMatrix&) = default;

 private:
  size_t index(int q, int k) const { return static_cast<size_t>(q) * static_cast<size_t>(n_) + k; }
  int n_ = 0;
  std::vector<uint8_t> cells_;
  std::vector<uint8_t> composition_;
};

// How a sequence's attention is restricted.
struct MaskPolicy {
  bool causal_only = false;  // baselines: plain causal attention
  TreeForm form = TreeForm::kBinary;
  Direction direction = Direction::kBottomUp;
  bool internal = false;     // duplicates present, composition rows
  bool masked = false;       // M: hide the inside of composed constituents
  bool mask_open_positions = true;

  static MaskPolicy from(const VariantConfig& cfg, bool mask_open_positions = true);
  static MaskPolicy from(const ModelScheme& scheme);
};

// Inserts a duplicate ")" after every close; start positions are remapped to
// the augmented indexing.
ActionSeq augment_for_internal(const ActionSeq& seq);

// Input stream for one sentence: <bos> followed by the actions.
std::vector<Action> make_stream(const ActionSeq& seq);

// Row-by-row mask construction. A stream starts with <bos>; sentences are
// separated by END, which is itself an ordinary visible position.
class MaskBuilder {
 public:
  explicit MaskBuilder(MaskPolicy policy);

  struct Row {
    std::vector<int> attend;  // ascending key positions
    bool composition = false;
  };

  // Consumes the next stream action and returns the attention row for it.
  Row push(const Action& a);

  int size() const { return static_cast<int>(visible_.size()); }
  // Parser state of the sentence in progress (absent right after END or <bos>).
  const std::optional<StackState>& sentence() const { return sentence_; }
  // Absolute stream position of sentence-relative position `rel`.
  int absolute(int rel) const { return offset_ + rel; }
  const MaskPolicy& policy() const { return policy_; }

 private:
  void hide_inside(int first, int close);
  std::vector<int> visible_row(int q) const;

  MaskPolicy policy_;
  std::vector<uint8_t> visible_;
  std::vector<uint8_t> is_open_;
  std::optional<StackState> sentence_;
  int offset_ = 0;
  bool expect_dup_ = false;
};

// Builds the mask for a full stream in one pass.
MaskMatrix build_mask(const std::vector<Action>& stream, const MaskPolicy& policy);
MaskMatrix build_mask(const std::vector<Action>& stream, const VariantConfig& cfg);

// Naive oracle: replays the prefix from scratch for every row and recomputes
// visibility directly from the closed constituents. Same contract as build_mask.
MaskMatrix reference_mask(const std::vector<Action>& stream, const MaskPolicy& policy);
MaskMatrix reference_mask(const std::vector<Action>& stream, const VariantConfig& cfg);

// '#' attend, '.' masked, 'o' attended by a composition row.
std::string render_grid(const MaskMatrix& m);
// Binary PGM (P5): white = attend, black = masked, gray = composition range.
void write_pgm(const MaskMatrix& m, std::ostream& os);

}  // namespace synlm
