#include "synlm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "synlm/error.hpp"

namespace synlm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

ad::Row layer_norm_row(const ad::Row& x, const ad::Mat& g, const ad::Mat& b) {
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  ad::Row out = ((x.array() - mu) * inv).matrix();
  out.array() *= g.row(0).array();
  out += b.row(0);
  return out;
}

ad::Row linear_row(const ad::Row& x, const ad::Mat& w, const ad::Mat& b) {
  ad::Row out = x * w;
  out += b.row(0);
  return out;
}

double log_sum_exp(const std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// Decoder

Decoder::Decoder(const Model& model) : model_(model) {
  for (int l = 0; l < model.config().n_layers; ++l) layers_.push_back(block("layers." + std::to_string(l) + "."));
  if (model.scheme().external()) {
    for (int l = 0; l < model.config().comp_layers; ++l) {
      comp_layers_.push_back(block("comp.layers." + std::to_string(l) + "."));
    }
  }
}

Decoder::Block Decoder::block(const std::string& prefix) const {
  auto p = [&](const std::string& name) { return &model_.param(prefix + name); };
  return {p("ln1.g"),      p("ln1.b"),      p("ln2.g"),      p("ln2.b"),      p("attn.q.W"), p("attn.q.b"),
          p("attn.k.W"),   p("attn.k.b"),   p("attn.v.W"),   p("attn.v.b"),   p("attn.o.W"), p("attn.o.b"),
          p("ff.1.W"),     p("ff.1.b"),     p("ff.2.W"),     p("ff.2.b")};
}

std::shared_ptr<const Decoder::Position> Decoder::step(const Cache& cache, const ad::Row& input,
                                                       const std::vector<int>& attend) const {
  const int self = static_cast<int>(cache.size());
  if (attend.empty() || attend.back() > self) throw ConfigError("attention row must not look ahead");
  if (self >= model_.config().max_seq_len) throw ConfigError("sequence longer than max_seq_len");
  const int heads = model_.config().n_heads;
  const long d = model_.config().d_model;
  const long dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  auto pos = std::make_shared<Position>();
  ad::Row x = input;
  ad::Row last_heads;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Block& b = layers_[l];
    const ad::Row a = layer_norm_row(x, *b.ln1g, *b.ln1b);
    const ad::Row q = linear_row(a, *b.wq, *b.bq);
    pos->keys.push_back(linear_row(a, *b.wk, *b.bk));
    pos->values.push_back(linear_row(a, *b.wv, *b.bv));
    auto key = [&](int j) -> const ad::Row& { return j == self ? pos->keys[l] : cache[static_cast<size_t>(j)]->keys[l]; };
    auto value = [&](int j) -> const ad::Row& {
      return j == self ? pos->values[l] : cache[static_cast<size_t>(j)]->values[l];
    };
    ad::Row att = ad::Row::Zero(d);
    std::vector<double> s(attend.size());
    for (int h = 0; h < heads; ++h) {
      double m = kNegInf;
      for (size_t i = 0; i < attend.size(); ++i) {
        s[i] = q.segment(h * dh, dh).dot(key(attend[i]).segment(h * dh, dh)) * sc;
        m = std::max(m, s[i]);
      }
      double z = 0.0;
      for (double& v : s) {
        v = std::exp(v - m);
        z += v;
      }
      for (size_t i = 0; i < attend.size(); ++i) {
        att.segment(h * dh, dh) += (s[i] / z) * value(attend[i]).segment(h * dh, dh);
      }
    }
    x += linear_row(att, *b.wo, *b.bo);
    const ad::Row c = layer_norm_row(x, *b.ln2g, *b.ln2b);
    ad::Row f = linear_row(c, *b.w1, *b.b1);
    f = f.unaryExpr([](double v) { return ad::gelu_value(v); });
    x += linear_row(f, *b.w2, *b.b2);
    last_heads = att;
  }
  const ad::Row hidden = layer_norm_row(x, model_.param("final.ln.g"), model_.param("final.ln.b"));
  ad::Row logits = linear_row(hidden, model_.param("out.W"), model_.param("out.b"));
  logits.array() -= ad::log_sum_exp(logits);
  pos->log_probs = std::move(logits);
  pos->pointer = last_heads.head(std::min<long>(model_.pointer_width(), d));
  return pos;
}

ad::Row Decoder::embed(int input_id, int position) const {
  if (position >= model_.config().max_seq_len) throw ConfigError("sequence longer than max_seq_len");
  return model_.param("embed.tokens").row(input_id) + model_.param("embed.positions").row(position);
}

ad::Row Decoder::token_child(int token) const {
  return linear_row(model_.param("embed.tokens").row(token), model_.param("comp.down.W"), model_.param("comp.down.b"));
}

ad::Row Decoder::compose(const std::vector<ad::Row>& children) const {
  if (!model_.scheme().external()) throw ConfigError("scheme has no external composition module");
  if (children.empty()) throw ConfigError("composition of no children");
  const int m = static_cast<int>(children.size());
  if (m > model_.config().max_children) throw ConfigError("constituent has more children than max_children");
  const long c = model_.config().d_comp;
  const int heads = model_.config().comp_heads;
  const long dh = c / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  ad::Mat x(m + 1, c);
  x.row(0) = model_.param("comp.agg").row(0);
  for (int i = 0; i < m; ++i) {
    if (children[static_cast<size_t>(i)].size() != c) throw ConfigError("child width differs from d_comp");
    x.row(i + 1) = children[static_cast<size_t>(i)];
  }
  x += model_.param("comp.positions").topRows(m + 1);
  for (const Block& b : comp_layers_) {
    ad::Mat q(m + 1, c), k(m + 1, c), v(m + 1, c);
    for (int i = 0; i <= m; ++i) {
      const ad::Row a = layer_norm_row(x.row(i), *b.ln1g, *b.ln1b);
      q.row(i) = linear_row(a, *b.wq, *b.bq);
      k.row(i) = linear_row(a, *b.wk, *b.bk);
      v.row(i) = linear_row(a, *b.wv, *b.bv);
    }
    ad::Mat att = ad::Mat::Zero(m + 1, c);
    for (int h = 0; h < heads; ++h) {
      ad::Mat s = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * sc;
      for (int i = 0; i <= m; ++i) ad::softmax_in_place(s.row(i));
      att.middleCols(h * dh, dh) = s * v.middleCols(h * dh, dh);
    }
    for (int i = 0; i <= m; ++i) {
      ad::Row r = x.row(i) + linear_row(att.row(i), *b.wo, *b.bo);
      const ad::Row n2 = layer_norm_row(r, *b.ln2g, *b.ln2b);
      ad::Row f = linear_row(n2, *b.w1, *b.b1);
      f = f.unaryExpr([](double val) { return ad::gelu_value(val); });
      x.row(i) = r + linear_row(f, *b.w2, *b.b2);
    }
  }
  return layer_norm_row(x.row(0), model_.param("comp.ln.g"), model_.param("comp.ln.b"));
}

ad::Row Decoder::composed_input(const ad::Row& s, int position) const {
  if (position >= model_.config().max_seq_len) throw ConfigError("sequence longer than max_seq_len");
  return linear_row(s, model_.param("comp.up.W"), model_.param("comp.up.b")) +
         model_.param("embed.positions").row(position);
}

std::vector<double> Decoder::start_log_probs(const ad::Row& query, const std::vector<const ad::Row*>& candidates) const {
  if (candidates.empty()) throw ConfigError("pointer distribution over an empty start set");
  const ad::Row u = query * model_.param("pointer.theta");
  ad::Row s(static_cast<long>(candidates.size()));
  for (size_t i = 0; i < candidates.size(); ++i) s(static_cast<long>(i)) = u.dot(*candidates[i]);
  const double z = ad::log_sum_exp(s);
  std::vector<double> out(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) out[i] = s(static_cast<long>(i)) - z;
  return out;
}

// ---------------------------------------------------------------------------
// DecodeState

DecodeState::DecodeState(const Decoder& decoder)
    : decoder_(&decoder), mask_(MaskPolicy::from(decoder.model().scheme())) {}

int DecodeState::feed(const Action& a) {
  const Model& model = decoder_->model();
  const ModelScheme& scheme = model.scheme();
  const int q = length();
  if (a.kind == ActionKind::kDupClose) throw ConfigError("duplicates are inserted by the decoder");
  if (!scheme.structured && a.kind != ActionKind::kGen && a.kind != ActionKind::kEnd && a.kind != ActionKind::kBos) {
    throw ConfigError("token-only scheme given a structural action");
  }

  ad::Row input;
  if (a.kind == ActionKind::kEnd) {
    if (scheme.structured && (!sentence_ || !sentence_->complete())) {
      throw IllegalAction(q, "END before the sentence is complete");
    }
    sentence_.reset();
    actions_.actions.clear();
    stream_of_plain_.clear();
    composed_.clear();
  } else if (a.kind != ActionKind::kBos && scheme.structured) {
    if (!sentence_) {
      sentence_.emplace(scheme.form, scheme.direction);
      stream_of_plain_.assign(1, q - 1);
    }
    sentence_->apply(a);
    actions_.actions.push_back(a);
    stream_of_plain_.push_back(q);
    if (scheme.external() && a.is_close()) {
      const auto& closed = *sentence_->last_closed();
      std::vector<ad::Row> kids;
      for (const auto& ch : closed.children) {
        kids.push_back(ch.constituent ? composed_.at(static_cast<size_t>(ch.constituent_id))
                                      : decoder_->token_child(ch.token));
      }
      if (closed.id != static_cast<int>(composed_.size())) throw ConfigError("constituents closed out of order");
      composed_.push_back(decoder_->compose(kids));
      ++compositions_;
      input = decoder_->composed_input(composed_.back(), q);
    }
  } else if (a.kind == ActionKind::kGen) {
    actions_.actions.push_back(a);
  }
  if (input.size() == 0) input = decoder_->embed(input_id(a, model.tokens()), q);

  Action masked = a;
  if (a.kind == ActionKind::kCloseWithStart) {
    // The mask counts duplicates as positions; starts are plain positions.
    masked.value = stream_of_plain_.at(static_cast<size_t>(a.value)) - stream_of_plain_[0];
  }
  auto row = mask_.push(masked);
  cache_.push_back(decoder_->step(cache_, input, row.attend));
  if (!(scheme.internal() && a.is_close())) return 1;
  auto dup = mask_.push(Action::dup());
  cache_.push_back(decoder_->step(cache_, decoder_->embed(input_id(Action::dup(), model.tokens()), q + 1), dup.attend));
  return 2;
}

double DecodeState::log_prob(const Action& a) const {
  const Model& model = decoder_->model();
  double lp = log_probs()(model.outputs().class_of(a));
  if (a.kind != ActionKind::kCloseWithStart) return lp;
  if (!sentence_) throw IllegalAction(length(), "close with nothing to close");
  const auto& items = sentence_->items();
  const size_t usable = model.scheme().width1_starts || items.empty() ? items.size() : items.size() - 1;
  std::vector<const ad::Row*> reps;
  int gold = -1;
  for (size_t i = 0; i < usable; ++i) {
    if (items[i].position == a.value) gold = static_cast<int>(i);
    const int at = stream_of_plain_[static_cast<size_t>(items[i].position)];
    reps.push_back(&cache_[static_cast<size_t>(at)]->pointer);
  }
  if (gold < 0) throw IllegalAction(length(), "start position is not a feasible start");
  return lp + decoder_->start_log_probs(cache_.back()->pointer, reps)[static_cast<size_t>(gold)];
}

// ---------------------------------------------------------------------------
// Scoring

std::vector<Action> context_stream(const Model& model, const std::vector<ActionSeq>& context) {
  return document_stream(context, model.scheme());
}

double joint_log_prob(Model& model, const std::vector<ActionSeq>& context, const ActionSeq& sentence) {
  const int from = static_cast<int>(context_stream(model, context).size()) - 1;
  std::vector<ActionSeq> all = context;
  all.push_back(sentence);
  EncodedSequence seq = encode(document_stream(all, model.scheme()), model.scheme(), model.outputs());
  for (int q = 0; q < from; ++q) seq.targets[static_cast<size_t>(q)] = -1;
  std::erase_if(seq.pointer_rows, [from](const ad::PointerRow& r) { return r.query < from; });
  ad::Tape tape;
  return -model.total_nll(tape, seq).value()(0, 0);
}

namespace {

DecodeState start_state(const Decoder& decoder, const std::vector<ActionSeq>& context, long* rows) {
  DecodeState s(decoder);
  auto feed = [&](const Action& a) {
    const int n = s.feed(a);
    if (rows) *rows += n;
  };
  feed(Action::bos());
  for (const auto& sentence : context) {
    for (const Action& a : sentence.actions) feed(a);
    feed(Action::end());
  }
  return s;
}

// Feeds the sentence into `s` and returns log p(sentence, END).
double score_sentence(DecodeState& s, const ActionSeq& sentence, long* rows) {
  double lp = 0.0;
  for (const Action& a : sentence.actions) {
    lp += s.log_prob(a);
    const int n = s.feed(a);
    if (rows) *rows += n;
  }
  return lp + s.log_prob(Action::end());
}

}  // namespace

ReplayResult replay(const Decoder& decoder, const std::vector<ActionSeq>& context, const ActionSeq& sentence) {
  ReplayResult r;
  DecodeState s = start_state(decoder, context, &r.forward_calls);
  const int before = s.compositions();
  r.log_prob = score_sentence(s, sentence, &r.forward_calls);
  r.compositions = s.compositions() - before;
  return r;
}

// ---------------------------------------------------------------------------
// Beam search

namespace {

struct Hyp {
  DecodeState state;
  double lp = 0.0;
  int tokens = 0;
  std::optional<Action> pending;  // chosen but not yet fed
};

struct Candidate {
  size_t parent;
  Action action;
  double lp;
};

class Search {
 public:
  Search(const Decoder& decoder, const SearchOptions& opts) : decoder_(decoder), opts_(opts), rng_(opts.seed) {
    const ModelScheme& scheme = decoder.model().scheme();
    structured_ = scheme.structured;
    internal_ = scheme.internal();
    if (opts.beam_size < 1) throw ConfigError("beam size must be at least 1");
    if (opts.mode == SearchMode::kForce && opts.tokens.empty()) throw ConfigError("force mode needs tokens");
    if (opts.mode == SearchMode::kSampleTopK && opts.top_k < 1) throw ConfigError("top-k needs k >= 1");
    for (int t : opts.tokens) {
      if (t < 0 || t >= decoder.model().tokens()) throw ConfigError("token id outside the vocabulary");
    }
  }

  SearchResult run(const std::vector<ActionSeq>& context) {
    long rows = 0;
    Hyp root{start_state(decoder_, context, &rows), 0.0, 0, std::nullopt};
    result_.rows += rows;
    result_.forward_calls += 1;  // the context is one prefill call
    std::vector<Hyp> beam{std::move(root)};
    result_.prefix_log_mass.push_back(0.0);
    const bool force = opts_.mode == SearchMode::kForce;
    const int target = force ? static_cast<int>(opts_.tokens.size()) : opts_.max_tokens;

    for (int t = 0;; ++t) {
      if (!force && t == target) break;
      feed_pending(beam);
      std::vector<Hyp> pool;
      std::vector<Hyp> ended;
      expand(beam, pool, ended);
      if (opts_.mode == SearchMode::kSampleTopK) {
        if (!sample_step(pool, ended, t, beam)) break;
        continue;
      }
      for (auto& h : ended) finished_.push_back(std::move(h));
      if (pool.empty()) {
        if (!finished_.empty()) break;
        collapse(beam, t);
      }
      beam = force ? force_step(pool, t) : generate_step(pool);
      result_.prefix_log_mass.push_back(mass(beam));
      if (!force && !finished_.empty() && best(finished_) >= best(beam)) break;
    }
    finish(beam);
    return std::move(result_);
  }

 private:
  SearchLimits limits_for(const Hyp& h) const {
    SearchLimits lim;
    lim.max_nonterminals = opts_.max_nonterminals;
    lim.max_consecutive_opens = opts_.max_consecutive_opens;
    lim.width1_starts = decoder_.model().scheme().width1_starts;
    if (opts_.mode == SearchMode::kForce) lim.tokens_remaining = static_cast<int>(opts_.tokens.size()) - h.tokens;
    return lim;
  }

  std::vector<Action> legal(const Hyp& h, const SearchLimits& lim, bool check_length) const {
    std::vector<Action> acts;
    if (!structured_) {
      const bool force = opts_.mode == SearchMode::kForce;
      const bool more = force ? h.tokens < static_cast<int>(opts_.tokens.size()) : true;
      const bool can_end = force ? !more : h.tokens > 0;
      if (can_end) acts.push_back(Action::end());
      if (more) acts.push_back(Action::gen(-1));
    } else {
      const ModelScheme& scheme = decoder_.model().scheme();
      const StackState fresh(scheme.form, scheme.direction);
      acts = legal_actions(h.state.sentence() ? *h.state.sentence() : fresh, lim);
    }
    const int min_tokens = opts_.mode == SearchMode::kForce ? 0 : std::min(opts_.max_tokens, opts_.min_tokens);
    std::vector<Action> out;
    for (const Action& a : acts) {
      if (a.kind == ActionKind::kEnd && h.tokens < min_tokens) continue;
      if (check_length && a.kind != ActionKind::kEnd) {
        const int need = internal_ && a.is_close() ? 2 : 1;
        if (h.state.length() + need > decoder_.model().config().max_seq_len) continue;
      }
      out.push_back(a);
    }
    return out;
  }

  void feed_pending(std::vector<Hyp>& hyps) {
    bool any = false, dup = false;
    for (auto& h : hyps) {
      if (!h.pending) continue;
      const int n = h.state.feed(*h.pending);
      result_.rows += n;
      any = true;
      dup = dup || n == 2;
      h.pending.reset();
    }
    result_.forward_calls += (any ? 1 : 0) + (dup ? 1 : 0);
  }

  // Structural expansion until every hypothesis has reached a GEN or END.
  void expand(std::vector<Hyp> frontier, std::vector<Hyp>& pool, std::vector<Hyp>& ended) {
    while (!frontier.empty()) {
      std::vector<Candidate> next;
      for (size_t i = 0; i < frontier.size(); ++i) {
        const Hyp& h = frontier[i];
        for (const Action& a : legal(h, limits_for(h), true)) {
          if (a.kind == ActionKind::kGen) {
            pool.push_back(h);
          } else if (a.kind == ActionKind::kEnd) {
            Hyp e = h;
            e.lp += h.state.log_prob(a);
            ended.push_back(std::move(e));
          } else {
            next.push_back({i, a, h.lp + h.state.log_prob(a)});
          }
        }
      }
      std::stable_sort(next.begin(), next.end(), [](const Candidate& a, const Candidate& b) { return a.lp > b.lp; });
      if (static_cast<int>(next.size()) > opts_.beam_size) next.resize(static_cast<size_t>(opts_.beam_size));
      std::vector<Hyp> children;
      children.reserve(next.size());
      for (const auto& c : next) {
        Hyp h = frontier[c.parent];
        h.lp = c.lp;
        h.pending = c.action;
        children.push_back(std::move(h));
      }
      feed_pending(children);
      frontier = std::move(children);
    }
  }

  std::vector<Hyp> keep_best(std::vector<Hyp>& pool, std::vector<Candidate>& cands) {
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.lp > b.lp; });
    if (static_cast<int>(cands.size()) > opts_.beam_size) cands.resize(static_cast<size_t>(opts_.beam_size));
    std::vector<Hyp> beam;
    for (const auto& c : cands) {
      Hyp h = pool[c.parent];
      h.lp = c.lp;
      h.tokens += 1;
      h.pending = c.action;
      beam.push_back(std::move(h));
    }
    return beam;
  }

  std::vector<Hyp> force_step(std::vector<Hyp>& pool, int t) {
    const Action a = Action::gen(opts_.tokens[static_cast<size_t>(t)]);
    std::vector<Candidate> cands;
    for (size_t i = 0; i < pool.size(); ++i) cands.push_back({i, a, pool[i].lp + pool[i].state.log_prob(a)});
    return keep_best(pool, cands);
  }

  // The unknown token is never generated.
  std::vector<Candidate> token_candidates(const std::vector<Hyp>& pool) const {
    std::vector<Candidate> cands;
    const int tokens = decoder_.model().tokens();
    for (size_t i = 0; i < pool.size(); ++i) {
      const ad::Row& lp = pool[i].state.log_probs();
      std::vector<Candidate> mine;
      for (int w = 1; w < tokens; ++w) mine.push_back({i, Action::gen(w), pool[i].lp + lp(w)});
      const size_t keep = std::min<size_t>(mine.size(), static_cast<size_t>(opts_.beam_size));
      std::partial_sort(mine.begin(), mine.begin() + static_cast<long>(keep), mine.end(),
                        [](const Candidate& a, const Candidate& b) {
                          return a.lp > b.lp || (a.lp == b.lp && a.action.value < b.action.value);
                        });
      cands.insert(cands.end(), mine.begin(), mine.begin() + static_cast<long>(keep));
    }
    return cands;
  }

  std::vector<Hyp> generate_step(std::vector<Hyp>& pool) {
    auto cands = token_candidates(pool);
    return keep_best(pool, cands);
  }

  // Draws the next token (or the end of the sentence) from the renormalized
  // top-k marginals. Returns false once END is drawn.
  bool sample_step(std::vector<Hyp>& pool, std::vector<Hyp>& ended, int t, std::vector<Hyp>& beam) {
    const int tokens = decoder_.model().tokens();
    std::vector<std::vector<double>> parts(static_cast<size_t>(tokens) + 1);
    for (const auto& h : pool) {
      const ad::Row& lp = h.state.log_probs();
      for (int w = 1; w < tokens; ++w) parts[static_cast<size_t>(w)].push_back(h.lp + lp(w));
    }
    for (const auto& h : ended) parts[static_cast<size_t>(tokens)].push_back(h.lp);
    std::vector<std::pair<double, int>> marg;
    for (int w = 1; w <= tokens; ++w) {
      const double m = log_sum_exp(parts[static_cast<size_t>(w)]);
      if (m > kNegInf) marg.push_back({m, w});
    }
    if (marg.empty()) collapse(beam, t);
    std::stable_sort(marg.begin(), marg.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    if (static_cast<int>(marg.size()) > opts_.top_k) marg.resize(static_cast<size_t>(opts_.top_k));
    std::vector<double> w;
    for (const auto& m : marg) w.push_back(std::exp(m.first - marg.front().first));
    const int pick = marg[std::discrete_distribution<size_t>(w.begin(), w.end())(rng_)].second;
    if (pick == tokens) {
      for (auto& h : ended) finished_.push_back(std::move(h));
      beam.clear();
      return false;
    }
    const Action a = Action::gen(pick);
    std::vector<Candidate> cands;
    for (size_t i = 0; i < pool.size(); ++i) cands.push_back({i, a, pool[i].lp + pool[i].state.log_prob(a)});
    beam = keep_best(pool, cands);
    result_.prefix_log_mass.push_back(mass(beam));
    return true;
  }

  [[noreturn]] void collapse(const std::vector<Hyp>& beam, int t) const {
    std::string why = "no legal continuation";
    if (!beam.empty()) {
      const Hyp& h = beam.front();
      SearchLimits lim = limits_for(h);
      auto any = [&](const SearchLimits& l, bool length) { return !legal(h, l, length).empty(); };
      SearchLimits no_pc = lim;
      no_pc.max_consecutive_opens.reset();
      SearchLimits no_nc = lim;
      no_nc.max_nonterminals.reset();
      if (lim.max_consecutive_opens && any(no_pc, true)) {
        why = "the consecutive-open limit p_c = " + std::to_string(*lim.max_consecutive_opens) +
              " blocks every continuation";
      } else if (lim.max_nonterminals && any(no_nc, true)) {
        why = "the nonterminal limit n_c = " + std::to_string(*lim.max_nonterminals) + " blocks every continuation";
      } else if (any(lim, false)) {
        why = "max_seq_len = " + std::to_string(decoder_.model().config().max_seq_len) + " is reached";
      }
    }
    throw RuntimeFailure("beam collapse after " + std::to_string(t) + " tokens: " + why);
  }

  static double mass(const std::vector<Hyp>& hyps) {
    std::vector<double> v;
    for (const auto& h : hyps) v.push_back(h.lp);
    return log_sum_exp(v);
  }

  static double best(const std::vector<Hyp>& hyps) {
    double b = kNegInf;
    for (const auto& h : hyps) b = std::max(b, h.lp);
    return b;
  }

  void finish(std::vector<Hyp>& beam) {
    std::vector<double> lps;
    for (const auto& h : finished_) {
      lps.push_back(h.lp);
      result_.hypotheses.push_back({h.state.sentence_actions(), h.lp, true});
    }
    result_.log_marginal = log_sum_exp(lps);
    if (finished_.empty()) {
      for (auto& h : beam) {
        ActionSeq seq = h.state.sentence_actions();
        if (h.pending) seq.actions.push_back(*h.pending);
        result_.hypotheses.push_back({std::move(seq), h.lp, false});
      }
    }
    std::stable_sort(result_.hypotheses.begin(), result_.hypotheses.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob > b.log_prob; });
    long comps = 0;
    for (const auto& h : finished_) comps = std::max<long>(comps, h.state.compositions());
    result_.compositions = comps;
  }

  const Decoder& decoder_;
  const SearchOptions& opts_;
  std::mt19937_64 rng_;
  bool structured_ = true;
  bool internal_ = false;
  std::vector<Hyp> finished_;
  SearchResult result_;
};

}  // namespace

SearchResult word_sync_beam_search(const Decoder& decoder, const SearchOptions& opts,
                                   const std::vector<ActionSeq>& context) {
  return Search(decoder, opts).run(context);
}

SurprisalResult surprisal(const Decoder& decoder, const std::vector<int>& tokens, int beam_size,
                          std::optional<int> max_nonterminals, std::optional<int> max_consecutive_opens,
                          const std::vector<ActionSeq>& context) {
  SearchOptions o;
  o.mode = SearchMode::kForce;
  o.tokens = tokens;
  o.beam_size = beam_size;
  o.max_nonterminals = max_nonterminals;
  o.max_consecutive_opens = max_consecutive_opens;
  SearchResult r = word_sync_beam_search(decoder, o, context);
  SurprisalResult out;
  const auto& m = r.prefix_log_mass;
  for (size_t t = 1; t < m.size(); ++t) out.per_token.push_back(m[t - 1] - m[t]);
  out.end = m.back() - r.log_marginal;
  out.log_marginal = r.log_marginal;
  out.forward_calls = r.forward_calls;
  return out;
}

// ---------------------------------------------------------------------------
// Proposals

namespace {

// Counts of trees over n tokens: f[n] single trees, q[n] sequences of trees
// (used for non-binary roots).
struct TreeCounts {
  std::vector<double> f, q;
};

TreeCounts tree_counts(int n, TreeForm form) {
  TreeCounts c;
  c.f.assign(static_cast<size_t>(n) + 1, 0.0);
  c.q.assign(static_cast<size_t>(n) + 1, 0.0);
  c.q[0] = 1.0;
  if (n >= 1) c.f[1] = 1.0;
  for (int m = 1; m <= n; ++m) {
    if (m >= 2) {
      double total = 0.0;
      for (int k = 1; k < m; ++k) {
        const double rest = form == TreeForm::kBinary ? c.f[static_cast<size_t>(m - k)] : c.q[static_cast<size_t>(m - k)];
        total += c.f[static_cast<size_t>(k)] * rest;
      }
      c.f[static_cast<size_t>(m)] = total;
    }
    double seq = 0.0;
    for (int k = 1; k <= m; ++k) seq += c.f[static_cast<size_t>(k)] * c.q[static_cast<size_t>(m - k)];
    c.q[static_cast<size_t>(m)] = seq;
  }
  return c;
}

std::vector<Tree> all_over(const std::vector<int>& tokens, int first, int n, TreeForm form);

// Sequences of at least `min_parts` trees covering tokens[first, first+n).
void sequences(const std::vector<int>& tokens, int first, int n, TreeForm form, int min_parts, std::vector<Tree>& prefix,
               const std::function<void(const std::vector<Tree>&)>& emit) {
  if (n == 0) {
    if (static_cast<int>(prefix.size()) >= min_parts) emit(prefix);
    return;
  }
  for (int k = 1; k <= n; ++k) {
    if (prefix.empty() && k == n && min_parts >= 2) continue;
    if (form == TreeForm::kBinary && prefix.size() == 1 && k != n) continue;
    for (const Tree& t : all_over(tokens, first, k, form)) {
      prefix.push_back(t);
      sequences(tokens, first + k, n - k, form, min_parts, prefix, emit);
      prefix.pop_back();
    }
  }
}

std::vector<Tree> all_over(const std::vector<int>& tokens, int first, int n, TreeForm form) {
  if (n == 1) return {Tree::leaf(tokens[static_cast<size_t>(first)])};
  std::vector<Tree> out;
  std::vector<Tree> prefix;
  sequences(tokens, first, n, form, 2, prefix, [&](const std::vector<Tree>& kids) { out.push_back(Tree::node(kids)); });
  return out;
}

Tree sample_over(const std::vector<int>& tokens, int first, int n, TreeForm form, const TreeCounts& c,
                 std::mt19937_64& rng);

// Uniform sequence of trees covering n > 0 tokens.
std::vector<Tree> sample_sequence(const std::vector<int>& tokens, int first, int n, TreeForm form, const TreeCounts& c,
                                  std::mt19937_64& rng) {
  std::vector<Tree> out;
  while (n > 0) {
    std::vector<double> w(static_cast<size_t>(n));
    for (int k = 1; k <= n; ++k) w[static_cast<size_t>(k - 1)] = c.f[static_cast<size_t>(k)] * c.q[static_cast<size_t>(n - k)];
    const int k = static_cast<int>(std::discrete_distribution<size_t>(w.begin(), w.end())(rng)) + 1;
    out.push_back(sample_over(tokens, first, k, form, c, rng));
    first += k;
    n -= k;
  }
  return out;
}

Tree sample_over(const std::vector<int>& tokens, int first, int n, TreeForm form, const TreeCounts& c,
                 std::mt19937_64& rng) {
  if (n == 1) return Tree::leaf(tokens[static_cast<size_t>(first)]);
  std::vector<double> w(static_cast<size_t>(n - 1));
  for (int k = 1; k < n; ++k) {
    const double rest = form == TreeForm::kBinary ? c.f[static_cast<size_t>(n - k)] : c.q[static_cast<size_t>(n - k)];
    w[static_cast<size_t>(k - 1)] = c.f[static_cast<size_t>(k)] * rest;
  }
  const int k = static_cast<int>(std::discrete_distribution<size_t>(w.begin(), w.end())(rng)) + 1;
  std::vector<Tree> kids{sample_over(tokens, first, k, form, c, rng)};
  if (form == TreeForm::kBinary) {
    kids.push_back(sample_over(tokens, first + k, n - k, form, c, rng));
  } else {
    for (auto& t : sample_sequence(tokens, first + k, n - k, form, c, rng)) kids.push_back(std::move(t));
  }
  return Tree::node(std::move(kids));
}

void shape_key(const Tree& t, std::string& out) {
  if (t.is_leaf()) {
    out += '.';
    return;
  }
  out += '(';
  for (const auto& c : t.children()) shape_key(c, out);
  out += ')';
}

}  // namespace

double tree_count(int n, TreeForm form) {
  if (n < 1) throw ConfigError("tree count needs at least one token");
  return tree_counts(n, form).f[static_cast<size_t>(n)];
}

std::vector<Tree> enumerate_trees(const std::vector<int>& tokens, TreeForm form) {
  if (tokens.empty()) throw ConfigError("cannot enumerate trees of an empty sentence");
  return all_over(tokens, 0, static_cast<int>(tokens.size()), form);
}

ProposalSet sample_proposals(const std::vector<int>& tokens, TreeForm form, int n, uint64_t seed) {
  if (n < 1) throw ConfigError("proposal count must be at least 1");
  if (tokens.empty()) throw ConfigError("cannot propose trees for an empty sentence");
  const int len = static_cast<int>(tokens.size());
  const TreeCounts c = tree_counts(len, form);
  const double total = c.f[static_cast<size_t>(len)];
  ProposalSet out;
  if (total <= n) {
    out.trees = enumerate_trees(tokens, form);
    out.source = ProposalSource::kExhaustive;
    return out;
  }
  out.source = ProposalSource::kSampled;
  std::mt19937_64 rng(seed);
  std::set<std::string> seen;
  while (static_cast<int>(out.trees.size()) < n) {
    Tree t = sample_over(tokens, 0, len, form, c, rng);
    std::string key;
    shape_key(t, key);
    if (seen.insert(key).second) out.trees.push_back(std::move(t));
  }
  return out;
}

MarginalResult marginal_log_prob(const Decoder& decoder, const std::vector<int>& sentence, const ProposalSet& proposals,
                                 const std::vector<ActionSeq>& context) {
  if (proposals.trees.empty()) throw ConfigError("empty proposal set");
  const ModelScheme& scheme = decoder.model().scheme();
  MarginalResult r;
  for (const Tree& t : proposals.trees) {
    if (t.tokens() != sentence) throw ConfigError("proposal tree does not yield the sentence");
    ActionSeq seq = sentence_actions(normalize(t), scheme);
    if (std::find(r.seqs.begin(), r.seqs.end(), seq) == r.seqs.end()) r.seqs.push_back(std::move(seq));
  }
  const DecodeState base = start_state(decoder, context, nullptr);
  for (const auto& seq : r.seqs) {
    DecodeState s = base;
    r.joint.push_back(score_sentence(s, seq, nullptr));
  }
  r.best = static_cast<int>(std::max_element(r.joint.begin(), r.joint.end()) - r.joint.begin());
  r.log_prob = log_sum_exp(r.joint);
  return r;
}

DocumentScore document_perplexity(const Decoder& decoder, const std::vector<std::vector<int>>& sentences,
                                  const std::vector<ProposalSet>& proposals) {
  if (sentences.size() != proposals.size()) throw ConfigError("one proposal set per sentence is required");
  const Model& model = decoder.model();
  const int max_len = model.config().max_seq_len;
  auto positions = [&](const ActionSeq& s) {
    return s.size() + (model.scheme().internal() ? s.nonterminal_count() : 0) + 1;
  };
  DocumentScore out;
  std::vector<ActionSeq> context;
  for (size_t i = 0; i < sentences.size(); ++i) {
    int longest = 0;
    for (const Tree& t : proposals[i].trees) {
      longest = std::max(longest, positions(sentence_actions(normalize(t), model.scheme())));
    }
    auto context_length = [&] {
      int n = 1;
      for (const auto& s : context) n += positions(s);
      return n;
    };
    while (!context.empty() && context_length() + longest > max_len) {
      context.erase(context.begin());
      ++out.context_drops;
    }
    if (1 + longest > max_len) throw ConfigError("sentence " + std::to_string(i) + " does not fit max_seq_len");
    MarginalResult m = marginal_log_prob(decoder, sentences[i], proposals[i], context);
    out.log_prob += m.log_prob;
    out.tokens += static_cast<long>(sentences[i].size());
    context.push_back(m.seqs[static_cast<size_t>(m.best)]);
  }
  out.perplexity = out.tokens > 0 ? std::exp(-out.log_prob / static_cast<double>(out.tokens)) : 0.0;
  return out;
}

}  // namespace synlm
