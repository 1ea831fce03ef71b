#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "synlm/ad.hpp"
#include "synlm/action.hpp"
#include "synlm/masking.hpp"
#include "synlm/tree.hpp"
#include "synlm/variant.hpp"

namespace synlm {

struct ModelConfig {
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 256;
  int d_comp = 32;
  int comp_layers = 2;
  int comp_heads = 2;
  int max_seq_len = 256;
  int max_children = 64;
  uint64_t seed = 1;

  // Throws ConfigError when the sizes are inconsistent.
  void validate() const;
};

// Input ids: tokens first, then the structural symbols.
enum class InputSymbol { kBos = 0, kOpen, kClose, kDup, kEnd, kCount };

// Next-action classes for one scheme: every token, then whichever of
// OPEN / CLOSE / END the scheme can emit. Absent classes are -1.
struct OutputSpace {
  int tokens = 0;
  int open = -1;
  int close = -1;
  int end = -1;
  int size = 0;

  static OutputSpace for_scheme(const ModelScheme& scheme, int tokens);
  // Class of a predicted action; throws ConfigError for actions never predicted.
  int class_of(const Action& a) const;
};

int input_id(const Action& a, int tokens);

struct CompositionChild {
  bool composed = false;
  int token = -1;  // token children
  int index = -1;  // composed children: index into EncodedSequence::compositions
};

struct CompositionSpec {
  int position = 0;  // stream position of the CLOSE that receives the vector
  std::vector<CompositionChild> children;
};

// A stream prepared for the model: inputs, mask, targets, pointer rows and,
// for external composition, the bottom-up composition schedule.
struct EncodedSequence {
  std::vector<Action> stream;
  std::vector<int> input_ids;
  std::vector<int> composed_at;  // composition index per position, or -1
  std::vector<CompositionSpec> compositions;
  std::shared_ptr<const ad::Allowed> allowed;
  std::vector<uint8_t> composition_rows;
  std::vector<int> targets;  // class predicted from each row, or -1
  std::vector<ad::PointerRow> pointer_rows;

  int length() const { return static_cast<int>(stream.size()); }
  int prediction_rows() const;
};

// Tree to the scheme's sentence actions: applies the scheme's tree
// transform and binarization, then linearizes. Token-only schemes emit the
// tokens alone. The tree must be normalized.
ActionSeq sentence_actions(const Tree& normalized, const ModelScheme& scheme);

// <bos> followed by each sentence (augmented for internal composition) and END.
std::vector<Action> document_stream(const std::vector<ActionSeq>& sentences, const ModelScheme& scheme);

EncodedSequence encode(const std::vector<Action>& stream, const ModelScheme& scheme, const OutputSpace& out);

// p(close) * p(start).
double joint_close_probability(double p_close, double p_start);

// Start distribution over positions: entry i is proportional to
// exp(query . theta . reps[i]) for i in feasible and zero elsewhere.
std::vector<double> pointer_distribution(const ad::Row& query, const ad::Mat& theta, const std::vector<ad::Row>& reps,
                                         const std::vector<int>& feasible);

struct ForwardOptions {
  const ad::Mat* input_delta = nullptr;  // added to the embedded inputs
};

class Model {
 public:
  Model(const ModelConfig& config, const ModelScheme& scheme, int tokens);

  const ModelConfig& config() const { return config_; }
  const ModelScheme& scheme() const { return scheme_; }
  const OutputSpace& outputs() const { return outputs_; }
  int tokens() const { return tokens_; }
  int input_vocab() const { return tokens_ + static_cast<int>(InputSymbol::kCount); }
  int pointer_width() const { return 2 * (config_.d_model / config_.n_heads); }

  std::map<std::string, ad::Param>& params() { return params_; }
  const std::map<std::string, ad::Param>& params() const { return params_; }
  const ad::Mat& param(const std::string& name) const;
  ad::Param& param(const std::string& name);
  void zero_grad();

  struct Forward {
    ad::Var logits;   // L x outputs
    ad::Var pointer;  // L x pointer_width: heads 0 and 1 of the final layer
    ad::Var hidden;   // L x d_model after the final norm
  };
  Forward forward(ad::Tape& tape, const EncodedSequence& seq, const ForwardOptions& opts = {});

  // Composition function on the tape: children in composition width, result
  // in composition width (before the up-projection).
  ad::Var compose(ad::Tape& tape, const std::vector<ad::Var>& children);
  // Child representation of a token in composition width.
  ad::Var token_child(ad::Tape& tape, int token);
  // Composed vector in model width from composition-width children.
  ad::Row compose_external(const std::vector<ad::Row>& children);

  // Sum of negative log-likelihoods over prediction-bearing rows (starts
  // included) on the tape.
  ad::Var total_nll(ad::Tape& tape, const EncodedSequence& seq, const ForwardOptions& opts = {});
  // Mean NLL per prediction-bearing row over a batch.
  ad::Var loss(ad::Tape& tape, const std::vector<EncodedSequence>& batch);
  double loss_value(const std::vector<EncodedSequence>& batch);
  // log p of every prediction in the stream, summed.
  double log_prob(const EncodedSequence& seq);

 private:
  ad::Var block(ad::Tape& tape, const std::string& prefix, ad::Var x, std::shared_ptr<const ad::Allowed> allowed,
                int heads, ad::Var* head_out);
  void add_param(const std::string& name, long rows, long cols, double std, std::mt19937_64& rng);
  void add_block_params(const std::string& prefix, int width, int ff, std::mt19937_64& rng);
  // Each parameter enters a tape once.
  ad::Var p(ad::Tape& tape, const std::string& name);

  ModelConfig config_;
  ModelScheme scheme_;
  int tokens_;
  OutputSpace outputs_;
  std::map<std::string, ad::Param> params_;
  uint64_t cached_tape_ = 0;
  std::map<std::string, ad::Var> cached_;
  std::map<int, std::shared_ptr<const ad::Allowed>> full_masks_;
};

}  // namespace synlm
