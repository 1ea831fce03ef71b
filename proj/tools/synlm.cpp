#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "synlm/error.hpp"
#include "synlm/harness.hpp"
#include "synlm/masking.hpp"

using namespace synlm;

namespace {

struct Input {
  std::string path;  // empty or "-" reads stdin

  std::vector<std::string> lines() const {
    std::ifstream file;
    std::istream* is = &std::cin;
    if (!path.empty() && path != "-") {
      file.open(resolve_data_path(path));
      if (!file) throw ConfigError("cannot open " + resolve_data_path(path));
      is = &file;
    }
    std::vector<std::string> out;
    std::string line;
    while (std::getline(*is, line)) {
      const auto a = line.find_first_not_of(" \t\r");
      if (a == std::string::npos || line[a] == '#') continue;
      out.push_back(line);
    }
    return out;
  }
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw ConfigError("cannot write " + path);
    }
  }
  std::ostream& os() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

bool is_tree_line(const std::string& line) { return line.find('(') != std::string::npos; }

// Tokens of a bracketed tree or a plain sentence line.
std::vector<int> line_tokens(const std::string& line, Vocabulary& vocab) {
  return is_tree_line(line) ? parse_bracketed(line, vocab).tokens() : parse_sentence(line, vocab);
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(8) << v;
  return os.str();
}

std::string render(const ActionSeq& seq, const ModelScheme& scheme, const Vocabulary& vocab) {
  if (!scheme.structured || seq.actions.empty()) {
    std::string out;
    for (const auto& a : seq.actions) out += (out.empty() ? "" : " ") + vocab.word(a.value);
    return out;
  }
  return to_string(delinearize(seq, scheme.form, scheme.direction), vocab);
}

std::optional<int> optional_limit(int v) { return v > 0 ? std::optional<int>(v) : std::nullopt; }

ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : ExperimentConfig::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syntactic language models over linearized trees"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Experiment configuration (JSON)");

  // transform
  auto* transform = app.add_subcommand("transform", "Rewrite bracketed trees");
  std::string op = "normalize";
  Input transform_in;
  transform->add_option("--op", op, "normalize | binarize | debinarize | left-branching | right-branching")
      ->check(CLI::IsMember({"normalize", "binarize", "debinarize", "left-branching", "right-branching"}));
  transform->add_option("--input", transform_in.path, "Corpus file (default stdin)");

  // linearize
  auto* lin = app.add_subcommand("linearize", "Print one action sequence per tree");
  std::string lin_variant;
  bool with_starts = false;
  Input lin_in;
  lin->add_option("--variant", lin_variant, "Bi-Dn, Bi-Up, Nb-Dn or Nb-Up")
      ->required()
      ->check(CLI::IsMember({"Bi-Dn", "Bi-Up", "Nb-Dn", "Nb-Up"}));
  lin->add_flag("--with-starts", with_starts, "Render Nb-Up starts as )@i");
  lin->add_option("--input", lin_in.path, "Corpus file (default stdin)");

  // mask
  auto* mask = app.add_subcommand("mask", "Print the attention mask of each tree");
  std::string mask_variant;
  std::string pgm_prefix;
  Input mask_in;
  mask->add_option("--variant", mask_variant, "Variant or baseline name")->required();
  mask->add_option("--pgm", pgm_prefix, "Also write PREFIX-<n>.pgm images");
  mask->add_option("--input", mask_in.path, "Corpus file (default stdin)");

  // synth
  auto* synth = app.add_subcommand("synth", "Sample a synthetic treebank");
  int synth_n = 1000;
  uint64_t synth_seed = 1;
  std::string grammar_path, synth_out, probes_out;
  int probe_n = 100;
  synth->add_option("--sentences", synth_n, "Number of trees");
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--grammar", grammar_path, "Grammar file (default builtin)");
  synth->add_option("--output", synth_out, "Corpus output (default stdout)");
  synth->add_option("--probes", probes_out, "Write agreement probes here");
  synth->add_option("--probe-count", probe_n, "Number of probes");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model and save a checkpoint");
  std::string ckpt_out = "model.ckpt";
  std::string train_model;
  int train_steps = -1;
  train_cmd->add_option("--output", ckpt_out, "Checkpoint path");
  train_cmd->add_option("--model", train_model, "Override the configured model name");
  train_cmd->add_option("--steps", train_steps, "Override the configured step count");

  // eval-ppl
  auto* ppl = app.add_subcommand("eval-ppl", "Perplexity upper bound from proposal trees");
  std::string ckpt;
  std::string proposals = "sample:300";
  uint64_t eval_seed = 1;
  bool document = false;
  Input ppl_in;
  ppl->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  ppl->add_option("--proposals", proposals, "exhaustive | sample:N | file:PATH");
  ppl->add_option("--seed", eval_seed, "Proposal sampling seed");
  ppl->add_flag("--document", document, "Also score the sentences as one document");
  ppl->add_option("--input", ppl_in.path, "Trees or sentences (default stdin)");

  // eval-surprisal
  auto* sur = app.add_subcommand("eval-surprisal", "Per-token surprisal from word-synchronous beam search");
  int sur_beam = 300, sur_pc = 3, sur_nc = 0;
  Input sur_in;
  sur->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  sur->add_option("--beam", sur_beam, "Beam size");
  sur->add_option("--pc", sur_pc, "Consecutive-open limit (0 disables)");
  sur->add_option("--nc", sur_nc, "Nonterminal limit (0 uses the sentence length)");
  sur->add_option("--input", sur_in.path, "Trees or sentences (default stdin)");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate sentences with their trees");
  std::string gen_mode = "beam";
  int gen_max = 30, gen_count = 1, gen_beam = 300, gen_pc = 5, gen_nc = 0;
  uint64_t gen_seed = 1;
  gen->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  gen->add_option("--mode", gen_mode, "beam | topk:K");
  gen->add_option("--max-tokens", gen_max, "Token budget");
  gen->add_option("--count", gen_count, "Hypotheses (beam) or samples (topk)");
  gen->add_option("--beam", gen_beam, "Beam size");
  gen->add_option("--pc", gen_pc, "Consecutive-open limit (0 disables)");
  gen->add_option("--nc", gen_nc, "Nonterminal limit (0 disables)");
  gen->add_option("--seed", gen_seed, "Sampling seed");

  // count-calls
  auto* calls = app.add_subcommand("count-calls", "Main-model calls to score gold trees and to search");
  int calls_beam = 300, calls_pc = 3;
  Input calls_in;
  calls->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  calls->add_option("--beam", calls_beam, "Beam size for the forced search");
  calls->add_option("--pc", calls_pc, "Consecutive-open limit (0 disables)");
  calls->add_option("--input", calls_in.path, "Trees (default stdin)");

  // matrix
  auto* matrix = app.add_subcommand("matrix", "Train and evaluate every configured model");
  int seeds = 0;
  std::string tsv_out, jsonl_out = "results.jsonl";
  matrix->add_option("--seeds", seeds, "Seeds per model (overrides the config)");
  matrix->add_option("--tsv", tsv_out, "Table output (default stdout)");
  matrix->add_option("--jsonl", jsonl_out, "Line-delimited results file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (transform->parsed()) {
      WordVocabulary vocab;
      for (const auto& line : transform_in.lines()) {
        const Tree t = parse_bracketed(line, vocab);
        Tree out;
        if (op == "normalize") out = normalize(t);
        if (op == "binarize") out = left_binarize(normalize(t));
        if (op == "debinarize") out = debinarize_left(t);
        if (op == "left-branching") out = make_left_branching(t.tokens());
        if (op == "right-branching") out = make_right_branching(t.tokens());
        std::cout << to_string(out, vocab) << '\n';
      }
    } else if (lin->parsed()) {
      WordVocabulary vocab;
      const ModelScheme s = ModelScheme::parse(lin_variant + "-Ex-Nm");
      for (const auto& line : lin_in.lines()) {
        const Tree t = normalize(parse_bracketed(line, vocab));
        std::cout << to_string(sentence_actions(t, s), vocab, with_starts) << '\n';
      }
    } else if (mask->parsed()) {
      WordVocabulary vocab;
      const ModelScheme s = load_config(config_path).scheme_for(mask_variant);
      int n = 0;
      for (const auto& line : mask_in.lines()) {
        const Tree t = normalize(parse_bracketed(line, vocab));
        const auto stream = document_stream({sentence_actions(t, s)}, s);
        const MaskMatrix m = build_mask(stream, MaskPolicy::from(s));
        std::cout << "# " << n << '\t';
        for (const auto& a : stream) std::cout << to_string(a, vocab) << ' ';
        std::cout << '\n' << render_grid(m) << '\n';
        if (!pgm_prefix.empty()) {
          std::ofstream img(pgm_prefix + "-" + std::to_string(n) + ".pgm", std::ios::binary);
          if (!img) throw ConfigError("cannot write " + pgm_prefix + "-" + std::to_string(n) + ".pgm");
          write_pgm(m, img);
        }
        ++n;
      }
    } else if (synth->parsed()) {
      Grammar g = Grammar::builtin();
      if (!grammar_path.empty()) {
        std::ifstream is(resolve_data_path(grammar_path));
        if (!is) throw ConfigError("cannot open " + grammar_path);
        std::stringstream ss;
        ss << is.rdbuf();
        g = Grammar::parse(ss.str());
      }
      WordVocabulary vocab;
      const auto trees = generate_synthetic_corpus(g, synth_n, synth_seed, vocab);
      Output out(synth_out);
      write_corpus(out.os(), trees, vocab);
      if (!probes_out.empty()) {
        Output p(probes_out);
        for (const auto& item : agreement_probes(g, vocab, probe_n, synth_seed + 1)) {
          for (int w : item.prefix) p.os() << vocab.word(w) << ' ';
          p.os() << '\t' << vocab.word(item.good) << '\t' << vocab.word(item.bad) << '\n';
        }
      }
    } else if (train_cmd->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      if (!train_model.empty()) cfg.model = train_model;
      if (train_steps >= 0) cfg.train.steps = train_steps;
      const ModelScheme scheme = cfg.scheme();
      const CorpusSplit corpus = load_corpus(cfg);
      cfg.train.on_step = [](int step, double loss) {
        if (step % 50 == 0) std::cerr << "step " << step << " loss " << fmt(loss) << '\n';
      };
      TrainedModel tm = train_scheme(scheme, cfg.model_config, cfg.train, corpus.train, corpus.vocab.size(), cfg.max_len);
      save_checkpoint(ckpt_out, *tm.model, corpus.vocab, tm.result.steps);
      std::cout << "model\tsteps\tfinal_loss\tseconds\n"
                << scheme.name << '\t' << tm.result.steps << '\t' << fmt(tm.result.final_loss) << '\t'
                << fmt(tm.seconds) << '\n';
    } else if (ppl->parsed()) {
      Checkpoint c = load_checkpoint(ckpt);
      const ModelScheme& scheme = c.model->scheme();
      const Decoder dec(*c.model);
      const ProposalSpec spec = ProposalSpec::parse(proposals);
      std::vector<ProposalSet> file_sets;
      if (spec.kind == ProposalSpec::Kind::kFile) file_sets = read_proposals_file(spec.path, c.vocab);
      const auto lines = ppl_in.lines();
      if (spec.kind == ProposalSpec::Kind::kFile && file_sets.size() != lines.size()) {
        throw ConfigError("the proposal file has " + std::to_string(file_sets.size()) + " blocks for " +
                          std::to_string(lines.size()) + " sentences");
      }
      std::cout << "sentence\ttokens\tlog_prob\tppl\tlinearizations\tcalls\tseconds\n";
      double total_lp = 0.0;
      long total_tokens = 0;
      std::vector<std::vector<int>> sentences;
      std::vector<ProposalSet> sets;
      for (size_t i = 0; i < lines.size(); ++i) {
        const Timer timer;
        const auto tokens = line_tokens(lines[i], c.vocab);
        ProposalSet props = spec.kind == ProposalSpec::Kind::kFile && scheme.structured &&
                                    scheme.transform == TreeTransform::kNone
                                ? file_sets[i]
                                : make_proposals(scheme, tokens, spec, eval_seed + i);
        const MarginalResult m = marginal_log_prob(dec, tokens, props);
        long n_calls = 0;
        for (const auto& seq : m.seqs) n_calls += replay(dec, {}, seq).forward_calls;
        total_lp += m.log_prob;
        total_tokens += static_cast<long>(tokens.size());
        std::cout << i << '\t' << tokens.size() << '\t' << fmt(m.log_prob) << '\t'
                  << fmt(std::exp(-m.log_prob / tokens.size())) << '\t' << m.seqs.size() << '\t' << n_calls << '\t'
                  << fmt(timer.seconds()) << '\n';
        sentences.push_back(tokens);
        sets.push_back(std::move(props));
      }
      if (total_tokens > 0) {
        std::cout << "# sentence-level ppl\t" << fmt(std::exp(-total_lp / static_cast<double>(total_tokens))) << '\n';
      }
      if (document && !sentences.empty()) {
        const DocumentScore d = document_perplexity(dec, sentences, sets);
        std::cout << "# document ppl\t" << fmt(d.perplexity) << "\tcontext drops\t" << d.context_drops << '\n';
      }
    } else if (sur->parsed()) {
      Checkpoint c = load_checkpoint(ckpt);
      const Decoder dec(*c.model);
      std::cout << "sentence\tsurprisals\tend\tlog_marginal\tcalls\tseconds\n";
      const auto lines = sur_in.lines();
      for (size_t i = 0; i < lines.size(); ++i) {
        const Timer timer;
        const auto tokens = line_tokens(lines[i], c.vocab);
        const int nc = sur_nc > 0 ? sur_nc : static_cast<int>(tokens.size());
        const SurprisalResult r = surprisal(dec, tokens, sur_beam, nc, optional_limit(sur_pc));
        std::cout << i << '\t';
        for (size_t t = 0; t < r.per_token.size(); ++t) std::cout << (t ? " " : "") << fmt(r.per_token[t]);
        std::cout << '\t' << fmt(r.end) << '\t' << fmt(r.log_marginal) << '\t' << r.forward_calls << '\t'
                  << fmt(timer.seconds()) << '\n';
      }
    } else if (gen->parsed()) {
      Checkpoint c = load_checkpoint(ckpt);
      const Decoder dec(*c.model);
      SearchOptions o;
      o.max_tokens = gen_max;
      o.beam_size = gen_beam;
      o.max_consecutive_opens = optional_limit(gen_pc);
      o.max_nonterminals = optional_limit(gen_nc);
      int samples = 1;
      if (gen_mode == "beam") {
        o.mode = SearchMode::kGenerate;
      } else if (gen_mode.rfind("topk:", 0) == 0) {
        o.mode = SearchMode::kSampleTopK;
        try {
          o.top_k = std::stoi(gen_mode.substr(5));
        } catch (const std::exception&) {
          throw ConfigError("bad k in --mode " + gen_mode);
        }
        samples = gen_count;
      } else {
        throw ConfigError("--mode must be beam or topk:K");
      }
      std::cout << "sample\tlog_prob\tcomplete\ttree\tcalls\tseconds\n";
      for (int s = 0; s < samples; ++s) {
        const Timer timer;
        o.seed = gen_seed + static_cast<uint64_t>(s);
        const SearchResult r = word_sync_beam_search(dec, o);
        const size_t shown = o.mode == SearchMode::kGenerate ? static_cast<size_t>(gen_count) : 1;
        for (size_t h = 0; h < std::min(shown, r.hypotheses.size()); ++h) {
          const Hypothesis& hyp = r.hypotheses[h];
          std::cout << (o.mode == SearchMode::kGenerate ? static_cast<int>(h) : s) << '\t' << fmt(hyp.log_prob)
                    << '\t' << (hyp.complete ? "yes" : "no") << '\t'
                    << (hyp.complete ? render(hyp.actions, c.model->scheme(), c.vocab)
                                     : to_string(hyp.actions, c.vocab)) << '\t' << r.forward_calls << '\t'
                    << fmt(timer.seconds()) << '\n';
        }
      }
    } else if (calls->parsed()) {
      Checkpoint c = load_checkpoint(ckpt);
      const Decoder dec(*c.model);
      const ModelScheme& scheme = c.model->scheme();
      std::cout << "sentence\ttokens\tgold_calls\tgold_compositions\tsearch_calls\tsearch_rows\tseconds\n";
      const auto lines = calls_in.lines();
      for (size_t i = 0; i < lines.size(); ++i) {
        const Timer timer;
        const Tree t = normalize(parse_bracketed(lines[i], c.vocab));
        const ReplayResult g = replay(dec, {}, sentence_actions(t, scheme));
        SearchOptions o;
        o.tokens = t.tokens();
        o.beam_size = calls_beam;
        o.max_nonterminals = static_cast<int>(o.tokens.size());
        o.max_consecutive_opens = optional_limit(calls_pc);
        const SearchResult r = word_sync_beam_search(dec, o);
        std::cout << i << '\t' << o.tokens.size() << '\t' << g.forward_calls << '\t' << g.compositions << '\t'
                  << r.forward_calls << '\t' << r.rows << '\t' << fmt(timer.seconds()) << '\n';
      }
    } else if (matrix->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      if (seeds > 0) cfg.seeds = seeds;
      const MatrixReport report = run_matrix(cfg, &std::cerr);
      Output tsv(tsv_out);
      write_matrix_tsv(tsv.os(), report);
      if (!jsonl_out.empty()) {
        Output j(jsonl_out);
        write_matrix_jsonl(j.os(), report);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
