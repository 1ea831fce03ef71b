#include "synlm/synthetic.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "synlm/error.hpp"

namespace synlm {

namespace {

constexpr const char* kBuiltin = R"(# Agreement grammar with prepositional and relative-clause attractors.
S -> NP_sg VP_sg [0.5] | NP_pl VP_pl [0.5]
NP_sg -> Det_sg N_sg [0.55] | Det_sg Adj N_sg [0.2] | Det_sg N_sg PP [0.15] | Det_sg N_sg RC_sg [0.1]
NP_pl -> Det_pl N_pl [0.55] | Det_pl Adj N_pl [0.2] | Det_pl N_pl PP [0.15] | Det_pl N_pl RC_pl [0.1]
PP -> P NP_sg [0.5] | P NP_pl [0.5]
RC_sg -> that VP_sg [0.6] | that NP_sg V_tr_sg [0.2] | that NP_pl V_tr_pl [0.2]
RC_pl -> that VP_pl [0.6] | that NP_sg V_tr_sg [0.2] | that NP_pl V_tr_pl [0.2]
VP_sg -> V_in_sg [0.4] | V_tr_sg NP_sg [0.2] | V_tr_sg NP_pl [0.2] | V_in_sg Adv [0.2]
VP_pl -> V_in_pl [0.4] | V_tr_pl NP_sg [0.2] | V_tr_pl NP_pl [0.2] | V_in_pl Adv [0.2]
Det_sg -> the | a | this | every
Det_pl -> the | some | these | many
N_sg -> dog | cat | bird | child | farmer | teacher | doctor | pilot | author | singer | lawyer | baker | king | queen | horse | student | painter | guard | nurse | clerk
N_pl -> dogs | cats | birds | children | farmers | teachers | doctors | pilots | authors | singers | lawyers | bakers | kings | queens | horses | students | painters | guards | nurses | clerks
Adj -> old | young | tall | small | happy | quiet | brave | clever | tired | busy
P -> near | behind | with | beside | under | above
Adv -> quickly | slowly | loudly | quietly | often | rarely
V_in_sg -> runs | sleeps | smiles | waits | laughs | sings | falls | arrives | swims | rests | cries | dances | works | talks | leaves
V_in_pl -> run | sleep | smile | wait | laugh | sing | fall | arrive | swim | rest | cry | dance | work | talk | leave
V_tr_sg -> sees | likes | helps | follows | watches | finds | calls | meets | knows | visits | admires | pushes | thanks | greets | avoids
V_tr_pl -> see | like | help | follow | watch | find | call | meet | know | visit | admire | push | thank | greet | avoid
)";

std::string trim(std::string_view s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t from = 0;
  while (true) {
    size_t at = s.find(sep, from);
    out.push_back(trim(s.substr(from, at == std::string_view::npos ? std::string_view::npos : at - from)));
    if (at == std::string_view::npos) break;
    from = at + 1;
  }
  return out;
}

}  // namespace

Grammar Grammar::parse(std::string_view text) {
  Grammar g;
  std::istringstream is{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t arrow = t.find("->");
    const std::string where = "grammar line " + std::to_string(line_no);
    if (arrow == std::string::npos) throw ParseError(where + ": missing '->'");
    const std::string lhs = trim(std::string_view(t).substr(0, arrow));
    if (lhs.empty() || lhs.find(' ') != std::string::npos) throw ParseError(where + ": bad left-hand side");
    if (g.rules.count(lhs)) throw ParseError(where + ": " + lhs + " defined twice");
    std::vector<GrammarRule> rules;
    double given = 0.0;
    int unpriced = 0;
    for (const auto& alt : split(std::string_view(t).substr(arrow + 2), '|')) {
      GrammarRule r;
      r.prob = -1.0;
      std::istringstream as(alt);
      std::string sym;
      while (as >> sym) {
        if (sym.front() == '[' && sym.back() == ']') {
          try {
            r.prob = std::stod(sym.substr(1, sym.size() - 2));
          } catch (const std::exception&) {
            throw ParseError(where + ": bad probability " + sym);
          }
          if (r.prob <= 0.0) throw ParseError(where + ": probabilities must be positive");
        } else {
          r.rhs.push_back(sym);
        }
      }
      if (r.rhs.empty()) throw ParseError(where + ": empty alternative");
      if (r.prob < 0) {
        ++unpriced;
      } else {
        given += r.prob;
      }
      rules.push_back(std::move(r));
    }
    if (unpriced > 0) {
      const double share = (1.0 - given) / unpriced;
      if (share <= 0.0) throw ParseError(where + ": no probability mass left for unpriced alternatives");
      for (auto& r : rules) {
        if (r.prob < 0) r.prob = share;
      }
      given = 1.0;
    }
    if (std::abs(given - 1.0) > 1e-9) throw ParseError(where + ": probabilities of " + lhs + " do not sum to 1");
    if (g.start.empty()) g.start = lhs;
    g.order.push_back(lhs);
    g.rules.emplace(lhs, std::move(rules));
  }
  if (g.start.empty()) throw ParseError("grammar has no rules");
  return g;
}

Grammar Grammar::builtin() { return parse(kBuiltin); }

std::vector<std::string> Grammar::terminals() const {
  std::vector<std::string> out;
  std::map<std::string, bool> seen;
  for (const auto& lhs : order) {
    for (const auto& r : rules.at(lhs)) {
      for (const auto& s : r.rhs) {
        if (!is_nonterminal(s) && !seen[s]) {
          seen[s] = true;
          out.push_back(s);
        }
      }
    }
  }
  return out;
}

std::vector<std::string> Grammar::expansions(const std::string& lhs) const {
  auto it = rules.find(lhs);
  if (it == rules.end()) throw ConfigError("grammar has no category " + lhs);
  std::vector<std::string> words;
  for (const auto& r : it->second) {
    if (r.rhs.size() != 1 || is_nonterminal(r.rhs[0])) throw ConfigError(lhs + " is not a word category");
    words.push_back(r.rhs[0]);
  }
  return words;
}

namespace {

Tree expand(const Grammar& g, const std::string& sym, std::mt19937_64& rng, Vocabulary& vocab, int depth,
            int max_depth) {
  if (!g.is_nonterminal(sym)) return Tree::leaf(vocab.intern(sym));
  if (depth > max_depth) {
    throw RuntimeFailure("grammar expansion exceeded depth " + std::to_string(max_depth) + " at " + sym);
  }
  const auto& rules = g.rules.at(sym);
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const GrammarRule* pick = &rules.back();
  for (const auto& r : rules) {
    if (u < r.prob) {
      pick = &r;
      break;
    }
    u -= r.prob;
  }
  std::vector<Tree> kids;
  for (const auto& s : pick->rhs) kids.push_back(expand(g, s, rng, vocab, depth + 1, max_depth));
  return Tree::node(std::move(kids));
}

}  // namespace

Tree sample_tree(const Grammar& g, std::mt19937_64& rng, Vocabulary& vocab, int max_depth) {
  return normalize(expand(g, g.start, rng, vocab, 0, max_depth));
}

std::vector<Tree> generate_synthetic_corpus(const Grammar& g, int n, uint64_t seed, WordVocabulary& vocab,
                                            int max_depth) {
  for (const auto& w : g.terminals()) vocab.intern(w);
  std::mt19937_64 rng(seed);
  std::vector<Tree> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(sample_tree(g, rng, vocab, max_depth));
  return out;
}

LengthMoments length_moments(const Grammar& g) {
  const int n = static_cast<int>(g.order.size());
  std::map<std::string, int> index;
  for (int i = 0; i < n; ++i) index[g.order[static_cast<size_t>(i)]] = i;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (const auto& r : g.rules.at(g.order[static_cast<size_t>(i)])) {
      for (const auto& s : r.rhs) {
        if (g.is_nonterminal(s)) {
          a(i, index[s]) += r.prob;
        } else {
          b(i) += r.prob;
        }
      }
    }
  }
  // Expected lengths are finite iff the mean-offspring matrix is subcritical.
  const double radius = a.eigenvalues().cwiseAbs().maxCoeff();
  if (radius >= 1.0 - 1e-12) throw ConfigError("grammar has infinite expected sentence length");
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) - a;
  const Eigen::VectorXd mean = lhs.fullPivLu().solve(b);

  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (const auto& r : g.rules.at(g.order[static_cast<size_t>(i)])) {
      double total = 0.0, squares = 0.0;
      int words = 0;
      for (const auto& s : r.rhs) {
        const double e = g.is_nonterminal(s) ? mean(index[s]) : 1.0;
        total += e;
        squares += e * e;
        words += g.is_nonterminal(s) ? 0 : 1;
      }
      c(i) += r.prob * (words + total * total - squares);
    }
  }
  const Eigen::VectorXd second = lhs.fullPivLu().solve(c);
  const int s = index[g.start];
  return {mean(s), second(s) - mean(s) * mean(s)};
}

std::vector<ProbeItem> agreement_probes(const Grammar& g, Vocabulary& vocab, int n, uint64_t seed) {
  const auto det_sg = g.expansions("Det_sg");
  const auto det_pl = g.expansions("Det_pl");
  const auto n_sg = g.expansions("N_sg");
  const auto n_pl = g.expansions("N_pl");
  const auto preps = g.expansions("P");
  const auto v_sg = g.expansions("V_in_sg");
  const auto v_pl = g.expansions("V_in_pl");
  if (v_sg.size() != v_pl.size()) throw ConfigError("V_in_sg and V_in_pl must list the same verbs");
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<std::string>& words) {
    return vocab.intern(words[std::uniform_int_distribution<size_t>(0, words.size() - 1)(rng)]);
  };
  std::vector<ProbeItem> out;
  for (int i = 0; i < n; ++i) {
    const bool singular = std::bernoulli_distribution(0.5)(rng);
    ProbeItem item;
    item.prefix.push_back(pick(singular ? det_sg : det_pl));
    item.prefix.push_back(pick(singular ? n_sg : n_pl));
    item.prefix.push_back(pick(preps));
    item.prefix.push_back(pick(singular ? det_pl : det_sg));
    item.prefix.push_back(pick(singular ? n_pl : n_sg));
    const size_t verb = std::uniform_int_distribution<size_t>(0, v_sg.size() - 1)(rng);
    item.good = vocab.intern(singular ? v_sg[verb] : v_pl[verb]);
    item.bad = vocab.intern(singular ? v_pl[verb] : v_sg[verb]);
    out.push_back(item);
  }
  return out;
}

}  // namespace synlm
