#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synlm/inference.hpp"
#include "synlm/model.hpp"
#include "synlm/synthetic.hpp"
#include "synlm/training.hpp"
#include "synlm/tree.hpp"
#include "synlm/vocabulary.hpp"

namespace synlm {

// One bracketed tree per line; blank lines and lines starting with '#' are
// skipped. Trees are normalized on the way in.
std::vector<Tree> read_corpus(std::istream& is, Vocabulary& vocab);
std::vector<Tree> read_corpus_file(const std::string& path, Vocabulary& vocab);
void write_corpus(std::ostream& os, const std::vector<Tree>& trees, const Vocabulary& vocab);

// Plain sentences, one per line.
std::vector<std::vector<int>> read_sentences_file(const std::string& path, Vocabulary& vocab);

// Proposal trees: blocks of bracketed trees separated by blank lines, one
// block per sentence in order.
std::vector<ProposalSet> read_proposals_file(const std::string& path, Vocabulary& vocab);

// Relative paths are resolved against $SYNLM_DATA_DIR when it is set.
std::string resolve_data_path(const std::string& path);

struct ProposalSpec {
  enum class Kind { kExhaustive, kSample, kFile } kind = Kind::kSample;
  int count = 300;
  std::string path;

  // "exhaustive", "sample:N" or "file:PATH".
  static ProposalSpec parse(const std::string& text);
};

// Proposal trees for one sentence under a scheme. Schemes whose
// linearization ignores the tree get a single flat tree. File specs are
// rejected here; read them with read_proposals_file.
constexpr double kMaxExhaustiveTrees = 100000;

ProposalSet make_proposals(const ModelScheme& scheme, const std::vector<int>& tokens, const ProposalSpec& spec,
                           uint64_t seed);

struct EvalSettings {
  int beam = 300;
  std::optional<int> max_nonterminals;  // unset: the sentence length
  int max_consecutive_opens = 3;
  std::string proposals = "sample:300";
  int probes = 100;
  int short_max_tokens = 6;  // sentences used for the exhaustive bound check
  int test_sentences = 0;    // 0 keeps every test sentence
};

struct SyntheticSettings {
  int sentences = 20000;
  uint64_t seed = 1;
  double test_fraction = 0.05;
  std::string grammar;  // path; empty uses the builtin grammar
};

struct ExperimentConfig {
  std::string model = "Bi-Up-Ex-M";
  ModelConfig model_config;
  bool width1_starts = true;
  bool mask_open_positions = true;
  TrainOptions train;
  int max_len = 0;  // chunk length; 0 uses max_seq_len
  std::string train_path;
  std::string test_path;
  SyntheticSettings synthetic;
  EvalSettings eval;
  // Matrix only.
  std::vector<std::string> models;
  int seeds = 1;

  // Unknown keys are errors so typos do not silently fall back to defaults.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;

  ModelScheme scheme() const { return scheme_for(model); }
  ModelScheme scheme_for(const std::string& name) const;
};

// Every compositional variant and baseline name.
std::vector<std::string> all_model_names();

// Mask layout on a fixed sentence, output classes and parameter groups. Two
// names share a fingerprint only if they run the same pipeline.
std::string pipeline_fingerprint(const ModelScheme& scheme, const ModelConfig& config);

struct TrainedModel {
  std::unique_ptr<Model> model;
  TrainResult result;
  double seconds = 0.0;
};

// Trains the scheme on the trees: linearize, chunk at sentence boundaries,
// optimize.
TrainedModel train_scheme(const ModelScheme& scheme, const ModelConfig& config, const TrainOptions& opts,
                          const std::vector<Tree>& trees, int tokens, int max_len = 0);

// Baselines share the model core with a causal mask and no composition.
// Throws ConfigError for a name that is not a baseline.
TrainedModel run_baseline(const std::string& name, const std::vector<Tree>& trees, int tokens,
                          const ExperimentConfig& cfg);

struct EvalReport {
  double ppl = 0.0;  // document perplexity with the configured proposals
  double ppl_short = 0.0;
  double ppl_exhaustive_short = 0.0;
  int short_sentences = 0;
  double probe_accuracy = 0.0;  // share of probes where the bad verb is more surprising
  double probe_contrast = 0.0;  // mean surprisal(bad) - surprisal(good)
  double calls_per_sentence = 0.0;
  double seconds = 0.0;
};

// Perplexity on the test trees, the short-sentence bound check and the
// agreement probes.
EvalReport evaluate(const Model& model, const std::vector<Tree>& test, const std::vector<ProbeItem>& probes,
                    const EvalSettings& settings, uint64_t seed);

struct MatrixRow {
  std::string model;
  bool ok = false;
  std::string error;
  int seeds = 0;
  double train_loss = 0.0;
  int train_steps = 0;
  double train_seconds = 0.0;
  EvalReport mean;
  EvalReport stddev;
};

struct TrendFlag {
  std::string description;
  bool holds = false;
  bool evaluated = false;
};

struct MatrixReport {
  std::vector<MatrixRow> rows;
  std::vector<TrendFlag> trends;
};

// Trains and evaluates every model of cfg.models (all names when empty) on
// the configured corpus. A failing row is recorded and the matrix continues.
MatrixReport run_matrix(const ExperimentConfig& cfg, std::ostream* log = nullptr);

// Compares Nm against M perplexity and M against Nm on the probes for the
// binary variants. Flags are informative only.
std::vector<TrendFlag> trend_flags(const std::vector<MatrixRow>& rows);

void write_matrix_tsv(std::ostream& os, const MatrixReport& report);
// One JSON record per model and metric, then one per trend flag.
void write_matrix_jsonl(std::ostream& os, const MatrixReport& report);

struct CorpusSplit {
  std::vector<Tree> train;
  std::vector<Tree> test;
  WordVocabulary vocab;
  std::vector<ProbeItem> probes;
};

// Reads the configured corpus files or generates the synthetic corpus.
CorpusSplit load_corpus(const ExperimentConfig& cfg);

}  // namespace synlm
