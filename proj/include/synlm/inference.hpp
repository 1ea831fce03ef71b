#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "synlm/ad.hpp"
#include "synlm/linearize.hpp"
#include "synlm/masking.hpp"
#include "synlm/model.hpp"
#include "synlm/tree.hpp"

namespace synlm {

// Plain-matrix incremental evaluation of a trained model. Every position
// keeps its per-layer keys and values, so extending a prefix by one action
// costs one row of work. Results agree with Model::forward up to rounding.
class Decoder {
 public:
  explicit Decoder(const Model& model);

  struct Position {
    std::vector<ad::Row> keys;    // per layer
    std::vector<ad::Row> values;  // per layer
    ad::Row log_probs;            // log-softmax over the scheme's output classes
    ad::Row pointer;              // final-layer heads 0 and 1
  };
  using Cache = std::vector<std::shared_ptr<const Position>>;

  // Computes position cache.size() from its input row. `attend` lists the
  // visible positions in ascending order, the new position included when
  // it sees itself.
  std::shared_ptr<const Position> step(const Cache& cache, const ad::Row& input, const std::vector<int>& attend) const;

  // Token or structural embedding plus the position embedding.
  ad::Row embed(int input_id, int position) const;
  // Composition-width child vector of a token.
  ad::Row token_child(int token) const;
  // Composition-width vector of a constituent from its children.
  ad::Row compose(const std::vector<ad::Row>& children) const;
  // Input row of a CLOSE that receives the composed vector `s`.
  ad::Row composed_input(const ad::Row& s, int position) const;

  // log p(start) for every candidate, given the query row's pointer vector.
  std::vector<double> start_log_probs(const ad::Row& query, const std::vector<const ad::Row*>& candidates) const;

  const Model& model() const { return model_; }

 private:
  struct Block {
    const ad::Mat *ln1g, *ln1b, *ln2g, *ln2b;
    const ad::Mat *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    const ad::Mat *w1, *b1, *w2, *b2;
  };
  Block block(const std::string& prefix) const;

  const Model& model_;
  std::vector<Block> layers_;
  std::vector<Block> comp_layers_;
};

// One stream being decoded: the model cache, the attention mask state, the
// sentence parser state and, for external composition, the composed vectors
// of the current sentence.
class DecodeState {
 public:
  explicit DecodeState(const Decoder& decoder);

  // Feeds one stream action (a plain sentence action, END or <bos>). For
  // internal composition a close is followed by its duplicate automatically.
  // Returns the number of main-model rows computed.
  int feed(const Action& a);

  // Next-action distribution from the last fed row.
  const ad::Row& log_probs() const { return cache_.back()->log_probs; }
  // log p(a | stream so far) for a plain sentence action or END. The start
  // of a CLOSE_WITH_START is scored by the pointer over all feasible starts.
  double log_prob(const Action& a) const;

  int length() const { return static_cast<int>(cache_.size()); }
  const std::optional<StackState>& sentence() const { return sentence_; }
  const ActionSeq& sentence_actions() const { return actions_; }
  int compositions() const { return compositions_; }

 private:
  const Decoder* decoder_;
  Decoder::Cache cache_;
  MaskBuilder mask_;
  std::optional<StackState> sentence_;
  ActionSeq actions_;
  std::vector<int> stream_of_plain_;  // plain sentence position -> stream position
  std::vector<ad::Row> composed_;     // by constituent id, composition width
  int compositions_ = 0;
};

// The stream <bos> + context sentences (each followed by END), ready to
// continue with a new sentence.
std::vector<Action> context_stream(const Model& model, const std::vector<ActionSeq>& context);

// log p(sentence, END | context) from a full forward pass.
double joint_log_prob(Model& model, const std::vector<ActionSeq>& context, const ActionSeq& sentence);

struct ReplayResult {
  double log_prob = 0.0;  // log p(sentence, END | context)
  long forward_calls = 0;
  long compositions = 0;
};

// Scores a gold sentence one row at a time, counting main-model calls. The
// context is fed position by position too.
ReplayResult replay(const Decoder& decoder, const std::vector<ActionSeq>& context, const ActionSeq& sentence);

enum class SearchMode { kForce, kGenerate, kSampleTopK };

struct SearchOptions {
  SearchMode mode = SearchMode::kForce;
  std::vector<int> tokens;  // force mode
  int beam_size = 300;
  std::optional<int> max_nonterminals;       // n_c
  std::optional<int> max_consecutive_opens;  // p_c
  int max_tokens = 50;  // generation modes
  int min_tokens = 0;   // generation modes: END is not allowed earlier
  int top_k = 2;        // sampling mode
  uint64_t seed = 1;
};

struct Hypothesis {
  ActionSeq actions;  // plain sentence actions
  double log_prob = 0.0;
  bool complete = false;  // END was scored
};

struct SearchResult {
  std::vector<Hypothesis> hypotheses;  // best first
  // log of the summed probability of the beam kept after each token;
  // entry 0 is the empty prefix.
  std::vector<double> prefix_log_mass;
  double log_marginal = 0.0;  // log of the summed complete hypotheses
  long forward_calls = 0;     // batched main-model calls
  long rows = 0;              // main-model rows computed over all hypotheses
  long compositions = 0;      // external composition calls
};

// Word-synchronous beam search. Hypotheses are regrouped each time they have
// generated the same number of tokens; structural actions between tokens are
// expanded level by level, keeping the best beam_size per level. Throws
// RuntimeFailure naming the constraint when no hypothesis can continue.
SearchResult word_sync_beam_search(const Decoder& decoder, const SearchOptions& opts,
                                   const std::vector<ActionSeq>& context = {});

// Main-model calls used by a search.
inline long count_forward_calls(const SearchResult& r) { return r.forward_calls; }

struct SurprisalResult {
  std::vector<double> per_token;  // -log p(x_t | x_<t)
  double end = 0.0;               // -log p(END | x)
  double log_marginal = 0.0;      // log p-hat(x)
  long forward_calls = 0;
};

// Surprisals from the synchronized beam masses; per_token plus end sum to
// -log p-hat(x).
SurprisalResult surprisal(const Decoder& decoder, const std::vector<int>& tokens, int beam_size,
                          std::optional<int> max_nonterminals, std::optional<int> max_consecutive_opens,
                          const std::vector<ActionSeq>& context = {});

enum class ProposalSource { kExhaustive, kSampled, kFile };

struct ProposalSet {
  std::vector<Tree> trees;
  ProposalSource source = ProposalSource::kSampled;
};

// Number of binary or normalized trees over n tokens.
double tree_count(int n, TreeForm form);
// Every tree of the form over `tokens`.
std::vector<Tree> enumerate_trees(const std::vector<int>& tokens, TreeForm form);
// n distinct trees drawn uniformly without replacement, or all trees when
// there are at most n.
ProposalSet sample_proposals(const std::vector<int>& tokens, TreeForm form, int n, uint64_t seed);

struct MarginalResult {
  double log_prob = 0.0;        // log of the summed joint probabilities
  std::vector<double> joint;    // per distinct linearization
  std::vector<ActionSeq> seqs;  // distinct linearizations, in proposal order
  int best = 0;                 // index into seqs
};

// log sum_y p(x, y | context) over the distinct linearizations of the
// proposals. Throws ConfigError when a proposal does not yield the sentence.
MarginalResult marginal_log_prob(const Decoder& decoder, const std::vector<int>& sentence, const ProposalSet& proposals,
                                 const std::vector<ActionSeq>& context = {});

struct DocumentScore {
  double log_prob = 0.0;
  long tokens = 0;
  double perplexity = 0.0;
  int context_drops = 0;  // sentences dropped from the front to fit max_seq_len
};

// Each sentence is scored given the best linearization of every earlier
// sentence. The context loses its earliest sentences when it would overflow.
DocumentScore document_perplexity(const Decoder& decoder, const std::vector<std::vector<int>>& sentences,
                                  const std::vector<ProposalSet>& proposals);

}  // namespace synlm
