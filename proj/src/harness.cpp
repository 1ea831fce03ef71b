#include "synlm/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "synlm/error.hpp"
#include "synlm/linearize.hpp"
#include "synlm/masking.hpp"

namespace synlm {

namespace {

using json = nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream is(resolve_data_path(path));
  if (!is) throw ConfigError("cannot open " + resolve_data_path(path));
  return is;
}

// Reads known keys out of a JSON object and rejects the rest.
class Keys {
 public:
  Keys(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  void get_optional(const char* key, std::optional<int>& out) {
    seen_.push_back(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    int v = 0;
    get(key, v);
    out = v;
  }
  const json* object(const char* key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) {
        throw ConfigError("unknown configuration key " + where_ + "." + k);
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Corpus files

std::vector<Tree> read_corpus(std::istream& is, Vocabulary& vocab) {
  std::vector<Tree> out;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      out.push_back(normalize(parse_bracketed(t, vocab)));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Tree> read_corpus_file(const std::string& path, Vocabulary& vocab) {
  auto is = open_input(path);
  return read_corpus(is, vocab);
}

void write_corpus(std::ostream& os, const std::vector<Tree>& trees, const Vocabulary& vocab) {
  for (const auto& t : trees) os << to_string(t, vocab) << '\n';
}

std::vector<std::vector<int>> read_sentences_file(const std::string& path, Vocabulary& vocab) {
  auto is = open_input(path);
  std::vector<std::vector<int>> out;
  std::string line;
  while (std::getline(is, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    out.push_back(parse_sentence(t, vocab));
  }
  return out;
}

std::vector<ProposalSet> read_proposals_file(const std::string& path, Vocabulary& vocab) {
  auto is = open_input(path);
  std::vector<ProposalSet> out;
  ProposalSet cur;
  cur.source = ProposalSource::kFile;
  std::string line;
  auto flush = [&] {
    if (!cur.trees.empty()) out.push_back(std::move(cur));
    cur = ProposalSet{};
    cur.source = ProposalSource::kFile;
  };
  while (std::getline(is, line)) {
    const std::string t = trim(line);
    if (t.empty()) {
      flush();
    } else if (t[0] != '#') {
      cur.trees.push_back(normalize(parse_bracketed(t, vocab)));
    }
  }
  flush();
  return out;
}

std::string resolve_data_path(const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  const char* dir = std::getenv("SYNLM_DATA_DIR");
  if (!dir || !*dir) return path;
  return (std::filesystem::path(dir) / path).string();
}

ProposalSpec ProposalSpec::parse(const std::string& text) {
  ProposalSpec s;
  if (text == "exhaustive") {
    s.kind = Kind::kExhaustive;
  } else if (text.rfind("sample:", 0) == 0) {
    s.kind = Kind::kSample;
    try {
      s.count = std::stoi(text.substr(7));
    } catch (const std::exception&) {
      throw ConfigError("bad proposal count in '" + text + "'");
    }
    if (s.count < 1) throw ConfigError("proposal count must be positive");
  } else if (text.rfind("file:", 0) == 0 && text.size() > 5) {
    s.kind = Kind::kFile;
    s.path = text.substr(5);
  } else {
    throw ConfigError("proposals must be exhaustive, sample:N or file:PATH, not '" + text + "'");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Configuration

ModelScheme ExperimentConfig::scheme_for(const std::string& name) const {
  ModelScheme s;
  try {
    s = ModelScheme::parse(name);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  s.width1_starts = width1_starts;
  s.mask_open_positions = mask_open_positions;
  return s;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  Keys top(j, "config");
  top.get("model", c.model);
  top.get("models", c.models);
  top.get("seeds", c.seeds);
  top.get("width1_starts", c.width1_starts);
  top.get("mask_open_positions", c.mask_open_positions);
  if (const json* m = top.object("model_config")) {
    Keys k(*m, "model_config");
    auto& mc = c.model_config;
    k.get("d_model", mc.d_model);
    k.get("n_layers", mc.n_layers);
    k.get("n_heads", mc.n_heads);
    k.get("d_ff", mc.d_ff);
    k.get("d_comp", mc.d_comp);
    k.get("comp_layers", mc.comp_layers);
    k.get("comp_heads", mc.comp_heads);
    k.get("max_seq_len", mc.max_seq_len);
    k.get("max_children", mc.max_children);
    k.get("seed", mc.seed);
    k.finish();
  }
  if (const json* t = top.object("train")) {
    Keys k(*t, "train");
    k.get("steps", c.train.steps);
    k.get("batch_size", c.train.batch_size);
    k.get("learning_rate", c.train.learning_rate);
    k.get("clip_norm", c.train.clip_norm);
    k.get("target_loss", c.train.target_loss);
    k.get("seed", c.train.seed);
    k.get("max_len", c.max_len);
    k.finish();
  }
  if (const json* d = top.object("data")) {
    Keys k(*d, "data");
    k.get("train", c.train_path);
    k.get("test", c.test_path);
    k.finish();
  }
  if (const json* s = top.object("synthetic")) {
    Keys k(*s, "synthetic");
    k.get("sentences", c.synthetic.sentences);
    k.get("seed", c.synthetic.seed);
    k.get("test_fraction", c.synthetic.test_fraction);
    k.get("grammar", c.synthetic.grammar);
    k.finish();
  }
  if (const json* e = top.object("eval")) {
    Keys k(*e, "eval");
    k.get("beam", c.eval.beam);
    k.get_optional("nc", c.eval.max_nonterminals);
    k.get("pc", c.eval.max_consecutive_opens);
    k.get("proposals", c.eval.proposals);
    k.get("probes", c.eval.probes);
    k.get("short_max_tokens", c.eval.short_max_tokens);
    k.get("test_sentences", c.eval.test_sentences);
    k.finish();
  }
  top.finish();
  c.model_config.validate();
  c.scheme();
  for (const auto& m : c.models) c.scheme_for(m);
  ProposalSpec::parse(c.eval.proposals);
  if (c.seeds < 1) throw ConfigError("seeds must be at least 1");
  if (c.eval.beam < 1) throw ConfigError("beam must be at least 1");
  if (c.synthetic.test_fraction <= 0.0 || c.synthetic.test_fraction >= 1.0) {
    throw ConfigError("synthetic.test_fraction must lie in (0, 1)");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  const auto& mc = model_config;
  json e = {{"beam", eval.beam},
            {"pc", eval.max_consecutive_opens},
            {"proposals", eval.proposals},
            {"probes", eval.probes},
            {"short_max_tokens", eval.short_max_tokens},
            {"test_sentences", eval.test_sentences}};
  e["nc"] = eval.max_nonterminals ? json(*eval.max_nonterminals) : json(nullptr);
  return {{"model", model},
          {"models", models},
          {"seeds", seeds},
          {"width1_starts", width1_starts},
          {"mask_open_positions", mask_open_positions},
          {"model_config",
           {{"d_model", mc.d_model},
            {"n_layers", mc.n_layers},
            {"n_heads", mc.n_heads},
            {"d_ff", mc.d_ff},
            {"d_comp", mc.d_comp},
            {"comp_layers", mc.comp_layers},
            {"comp_heads", mc.comp_heads},
            {"max_seq_len", mc.max_seq_len},
            {"max_children", mc.max_children},
            {"seed", mc.seed}}},
          {"train",
           {{"steps", train.steps},
            {"batch_size", train.batch_size},
            {"learning_rate", train.learning_rate},
            {"clip_norm", train.clip_norm},
            {"target_loss", train.target_loss},
            {"seed", train.seed},
            {"max_len", max_len}}},
          {"data", {{"train", train_path}, {"test", test_path}}},
          {"synthetic",
           {{"sentences", synthetic.sentences},
            {"seed", synthetic.seed},
            {"test_fraction", synthetic.test_fraction},
            {"grammar", synthetic.grammar}}},
          {"eval", e}};
}

std::vector<std::string> all_model_names() {
  std::vector<std::string> names;
  for (const auto& v : VariantConfig::all()) names.push_back(v.name());
  for (const auto& b : ModelScheme::baseline_names()) names.push_back(b);
  return names;
}

std::string pipeline_fingerprint(const ModelScheme& scheme, const ModelConfig& config) {
  // ( ( 1 2 ) ( 3 4 5 ) ) exercises binarization and a three-way close.
  const Tree t = Tree::node({Tree::node({Tree::leaf(1), Tree::leaf(2)}),
                             Tree::node({Tree::leaf(3), Tree::leaf(4), Tree::leaf(5)})});
  const OutputSpace out = OutputSpace::for_scheme(scheme, 6);
  const EncodedSequence e = encode(document_stream({sentence_actions(t, scheme)}, scheme), scheme, out);
  std::ostringstream os;
  for (const auto& a : e.stream) os << static_cast<int>(a.kind) << ':' << a.value << ' ';
  os << '|';
  for (long q = 0; q < e.allowed->rows(); ++q) {
    for (long k = 0; k < e.allowed->cols(); ++k) os << ((*e.allowed)(q, k) ? '#' : '.');
    os << (e.composition_rows[static_cast<size_t>(q)] ? 'o' : '/');
  }
  os << '|' << out.size << '|' << e.compositions.size() << '|' << e.pointer_rows.size() << '|';
  ModelConfig small = config;
  small.max_seq_len = std::max(small.max_seq_len, e.length());
  const Model m(small, scheme, 6);
  for (const auto& [name, _] : m.params()) os << name << ',';
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << std::hash<std::string>{}(os.str());
  return hex.str();
}

// ---------------------------------------------------------------------------
// Training

TrainedModel train_scheme(const ModelScheme& scheme, const ModelConfig& config, const TrainOptions& opts,
                          const std::vector<Tree>& trees, int tokens, int max_len) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainedModel out;
  out.model = std::make_unique<Model>(config, scheme, tokens);
  std::vector<ActionSeq> sentences;
  sentences.reserve(trees.size());
  for (const auto& t : trees) sentences.push_back(sentence_actions(t, scheme));
  const auto chunks = make_chunks(sentences, *out.model, max_len > 0 ? max_len : config.max_seq_len);
  out.result = train(*out.model, chunks, opts);
  out.seconds = seconds_since(t0);
  return out;
}

TrainedModel run_baseline(const std::string& name, const std::vector<Tree>& trees, int tokens,
                          const ExperimentConfig& cfg) {
  const auto& names = ModelScheme::baseline_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) throw ConfigError(name + " is not a baseline");
  return train_scheme(cfg.scheme_for(name), cfg.model_config, cfg.train, trees, tokens, cfg.max_len);
}

// ---------------------------------------------------------------------------
// Evaluation

ProposalSet make_proposals(const ModelScheme& scheme, const std::vector<int>& tokens, const ProposalSpec& spec,
                           uint64_t seed) {
  if (!scheme.structured || scheme.transform != TreeTransform::kNone || tokens.size() == 1) {
    // The linearization does not depend on the tree.
    std::vector<Tree> leaves;
    for (int t : tokens) leaves.push_back(Tree::leaf(t));
    return {{tokens.size() == 1 ? leaves[0] : Tree::node(leaves)}, ProposalSource::kExhaustive};
  }
  switch (spec.kind) {
    case ProposalSpec::Kind::kExhaustive:
      if (tree_count(static_cast<int>(tokens.size()), scheme.form) > kMaxExhaustiveTrees) {
        throw ConfigError("exhaustive proposals over " + std::to_string(tokens.size()) +
                          " tokens would enumerate too many trees; use sample:N");
      }
      return {enumerate_trees(tokens, scheme.form), ProposalSource::kExhaustive};
    case ProposalSpec::Kind::kSample:
      return sample_proposals(tokens, scheme.form, spec.count, seed);
    case ProposalSpec::Kind::kFile:
      break;
  }
  throw ConfigError("file proposals are read with read_proposals_file");
}

EvalReport evaluate(const Model& model, const std::vector<Tree>& test, const std::vector<ProbeItem>& probes,
                    const EvalSettings& settings, uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelScheme& scheme = model.scheme();
  const Decoder dec(model);
  const ProposalSpec spec = ProposalSpec::parse(settings.proposals);
  EvalReport r;

  std::vector<std::vector<int>> sentences;
  std::vector<ProposalSet> props;
  if (spec.kind == ProposalSpec::Kind::kFile) {
    throw ConfigError("file proposals need the eval-ppl command, which reads them with the test sentences");
  }
  const size_t limit = settings.test_sentences > 0 ? std::min(test.size(), static_cast<size_t>(settings.test_sentences))
                                                   : test.size();
  for (size_t i = 0; i < limit; ++i) {
    sentences.push_back(test[i].tokens());
    props.push_back(make_proposals(scheme, sentences.back(), spec, seed + i));
  }
  if (!sentences.empty()) r.ppl = document_perplexity(dec, sentences, props).perplexity;

  // Sentence-level bound check on short sentences: sampled proposals can
  // only lose probability mass against the exhaustive sum.
  double lp_sampled = 0.0, lp_exact = 0.0;
  long short_tokens = 0;
  const ProposalSpec exhaustive = ProposalSpec::parse("exhaustive");
  for (size_t i = 0; i < sentences.size(); ++i) {
    if (static_cast<int>(sentences[i].size()) > settings.short_max_tokens) continue;
    lp_sampled += marginal_log_prob(dec, sentences[i], props[i]).log_prob;
    lp_exact += marginal_log_prob(dec, sentences[i], make_proposals(scheme, sentences[i], exhaustive, 0)).log_prob;
    short_tokens += static_cast<long>(sentences[i].size());
    ++r.short_sentences;
  }
  if (short_tokens > 0) {
    r.ppl_short = std::exp(-lp_sampled / static_cast<double>(short_tokens));
    r.ppl_exhaustive_short = std::exp(-lp_exact / static_cast<double>(short_tokens));
  }

  long calls = 0;
  int runs = 0, correct = 0;
  double contrast = 0.0;
  const int n_probes = std::min<int>(settings.probes, static_cast<int>(probes.size()));
  for (int i = 0; i < n_probes; ++i) {
    const ProbeItem& p = probes[static_cast<size_t>(i)];
    double s[2];
    for (int which = 0; which < 2; ++which) {
      std::vector<int> toks = p.prefix;
      toks.push_back(which == 0 ? p.good : p.bad);
      const int nc = settings.max_nonterminals.value_or(static_cast<int>(toks.size()));
      SurprisalResult sr = surprisal(dec, toks, settings.beam, nc, settings.max_consecutive_opens);
      s[which] = sr.per_token.back();
      calls += sr.forward_calls;
      ++runs;
    }
    contrast += s[1] - s[0];
    correct += s[1] > s[0] ? 1 : 0;
  }
  if (n_probes > 0) {
    r.probe_accuracy = static_cast<double>(correct) / n_probes;
    r.probe_contrast = contrast / n_probes;
    r.calls_per_sentence = static_cast<double>(calls) / runs;
  }
  r.seconds = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Matrix

CorpusSplit load_corpus(const ExperimentConfig& cfg) {
  CorpusSplit out;
  if (!cfg.train_path.empty()) {
    out.train = read_corpus_file(cfg.train_path, out.vocab);
    out.vocab.freeze();
    if (!cfg.test_path.empty()) {
      out.test = read_corpus_file(cfg.test_path, out.vocab);
    } else {
      const size_t n_test = static_cast<size_t>(std::ceil(out.train.size() * cfg.synthetic.test_fraction));
      out.test.assign(out.train.end() - static_cast<long>(n_test), out.train.end());
      out.train.resize(out.train.size() - n_test);
    }
    return out;
  }
  Grammar g = Grammar::builtin();
  if (!cfg.synthetic.grammar.empty()) {
    auto is = open_input(cfg.synthetic.grammar);
    std::stringstream ss;
    ss << is.rdbuf();
    g = Grammar::parse(ss.str());
  }
  auto trees = generate_synthetic_corpus(g, cfg.synthetic.sentences, cfg.synthetic.seed, out.vocab);
  try {
    out.probes = agreement_probes(g, out.vocab, cfg.eval.probes, cfg.synthetic.seed + 1);
  } catch (const ConfigError&) {
    out.probes.clear();  // the grammar lacks the agreement categories
  }
  out.vocab.freeze();
  const size_t n_test = static_cast<size_t>(std::ceil(trees.size() * cfg.synthetic.test_fraction));
  out.test.assign(trees.end() - static_cast<long>(n_test), trees.end());
  trees.resize(trees.size() - n_test);
  out.train = std::move(trees);
  return out;
}

namespace {

const std::vector<std::pair<const char*, double EvalReport::*>>& report_fields() {
  static const std::vector<std::pair<const char*, double EvalReport::*>> fields = {
      {"ppl", &EvalReport::ppl},
      {"ppl_short", &EvalReport::ppl_short},
      {"ppl_exhaustive_short", &EvalReport::ppl_exhaustive_short},
      {"probe_accuracy", &EvalReport::probe_accuracy},
      {"probe_contrast", &EvalReport::probe_contrast},
      {"calls_per_sentence", &EvalReport::calls_per_sentence},
      {"eval_seconds", &EvalReport::seconds},
  };
  return fields;
}

void aggregate(const std::vector<EvalReport>& runs, EvalReport& mean, EvalReport& sd) {
  for (const auto& [_, f] : report_fields()) {
    double s = 0.0, sq = 0.0;
    for (const auto& r : runs) s += r.*f;
    const double m = s / runs.size();
    for (const auto& r : runs) sq += (r.*f - m) * (r.*f - m);
    mean.*f = m;
    sd.*f = runs.size() > 1 ? std::sqrt(sq / (runs.size() - 1)) : 0.0;
  }
  mean.short_sentences = runs.front().short_sentences;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

MatrixReport run_matrix(const ExperimentConfig& cfg, std::ostream* log) {
  const CorpusSplit corpus = load_corpus(cfg);
  const std::vector<std::string> names = cfg.models.empty() ? all_model_names() : cfg.models;
  MatrixReport report;
  for (const auto& name : names) {
    MatrixRow row;
    row.model = name;
    try {
      const ModelScheme scheme = cfg.scheme_for(name);
      std::vector<EvalReport> runs;
      for (int s = 0; s < cfg.seeds; ++s) {
        ModelConfig mc = cfg.model_config;
        mc.seed = cfg.model_config.seed + static_cast<uint64_t>(s);
        TrainOptions opts = cfg.train;
        opts.seed = cfg.train.seed + static_cast<uint64_t>(s);
        TrainedModel tm = train_scheme(scheme, mc, opts, corpus.train, corpus.vocab.size(), cfg.max_len);
        row.train_loss += tm.result.final_loss / cfg.seeds;
        row.train_steps = tm.result.steps;
        row.train_seconds += tm.seconds;
        runs.push_back(evaluate(*tm.model, corpus.test, corpus.probes, cfg.eval, cfg.train.seed + s));
        if (log) {
          *log << name << " seed " << s << ": loss " << fmt(tm.result.final_loss) << " ppl " << fmt(runs.back().ppl)
               << " probes " << fmt(runs.back().probe_accuracy) << '\n';
        }
      }
      aggregate(runs, row.mean, row.stddev);
      row.seeds = cfg.seeds;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      if (log) *log << name << " failed: " << e.what() << '\n';
    }
    report.rows.push_back(std::move(row));
  }
  report.trends = trend_flags(report.rows);
  return report;
}

std::vector<TrendFlag> trend_flags(const std::vector<MatrixRow>& rows) {
  std::map<std::string, const MatrixRow*> by;
  for (const auto& r : rows) {
    if (r.ok) by[r.model] = &r;
  }
  std::vector<TrendFlag> out;
  for (const auto& v : VariantConfig::all()) {
    if (v.masking != Masking::kMasked) continue;
    VariantConfig nm = v;
    nm.masking = Masking::kUnmasked;
    const auto m_it = by.find(v.name());
    const auto nm_it = by.find(nm.name());
    const bool both = m_it != by.end() && nm_it != by.end();
    TrendFlag ppl{"ppl " + nm.name() + " < " + v.name(), false, both};
    if (both) ppl.holds = nm_it->second->mean.ppl < m_it->second->mean.ppl;
    out.push_back(ppl);
    if (v.form == TreeForm::kBinary) {
      const bool probes = both && (m_it->second->mean.probe_accuracy > 0 || nm_it->second->mean.probe_accuracy > 0);
      TrendFlag p{"probe accuracy " + v.name() + " >= " + nm.name(), false, probes};
      if (probes) p.holds = m_it->second->mean.probe_accuracy >= nm_it->second->mean.probe_accuracy;
      out.push_back(p);
    }
  }
  return out;
}

void write_matrix_tsv(std::ostream& os, const MatrixReport& report) {
  os << "model\tstatus\tseeds\ttrain_loss\ttrain_steps\ttrain_seconds";
  for (const auto& [name, _] : report_fields()) os << '\t' << name << '\t' << name << "_std";
  os << "\tshort_sentences\n";
  for (const auto& r : report.rows) {
    os << r.model << '\t' << (r.ok ? "ok" : "failed: " + r.error) << '\t' << r.seeds << '\t' << fmt(r.train_loss)
       << '\t' << r.train_steps << '\t' << fmt(r.train_seconds);
    for (const auto& [_, f] : report_fields()) os << '\t' << fmt(r.mean.*f) << '\t' << fmt(r.stddev.*f);
    os << '\t' << r.mean.short_sentences << '\n';
  }
  for (const auto& t : report.trends) {
    os << "# trend\t" << t.description << '\t' << (!t.evaluated ? "not evaluated" : t.holds ? "holds" : "does not hold")
       << '\n';
  }
}

void write_matrix_jsonl(std::ostream& os, const MatrixReport& report) {
  for (const auto& r : report.rows) {
    if (!r.ok) {
      os << json{{"model", r.model}, {"metric", "status"}, {"value", "failed"}, {"error", r.error}}.dump() << '\n';
      continue;
    }
    os << json{{"model", r.model}, {"metric", "train_loss"}, {"value", r.train_loss}, {"seeds", r.seeds}}.dump()
       << '\n';
    os << json{{"model", r.model}, {"metric", "train_seconds"}, {"value", r.train_seconds}, {"seeds", r.seeds}}.dump()
       << '\n';
    for (const auto& [name, f] : report_fields()) {
      os << json{{"model", r.model}, {"metric", name}, {"value", r.mean.*f}, {"std", r.stddev.*f}, {"seeds", r.seeds}}
                .dump()
         << '\n';
    }
  }
  for (const auto& t : report.trends) {
    os << json{{"trend", t.description}, {"evaluated", t.evaluated}, {"holds", t.holds}}.dump() << '\n';
  }
}

}  // namespace synlm
