#include "synlm/model.hpp"

#include <algorithm>
#include <cmath>

#include "synlm/error.hpp"
#include "synlm/linearize.hpp"

namespace synlm {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(d_model, "d_model");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_ff, "d_ff");
  positive(d_comp, "d_comp");
  positive(comp_layers, "comp_layers");
  positive(comp_heads, "comp_heads");
  positive(max_seq_len, "max_seq_len");
  positive(max_children, "max_children");
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (d_comp % comp_heads != 0) throw ConfigError("d_comp must be divisible by comp_heads");
  if (d_comp > d_model) throw ConfigError("d_comp must not exceed d_model");
}

OutputSpace OutputSpace::for_scheme(const ModelScheme& scheme, int tokens) {
  OutputSpace o;
  o.tokens = tokens;
  int next = tokens;
  if (scheme.structured && scheme.direction == Direction::kTopDown) o.open = next++;
  if (scheme.structured) o.close = next++;
  o.end = next++;
  o.size = next;
  return o;
}

int OutputSpace::class_of(const Action& a) const {
  switch (a.kind) {
    case ActionKind::kGen:
      if (a.value < 0 || a.value >= tokens) throw ConfigError("token id outside the vocabulary");
      return a.value;
    case ActionKind::kOpen:
      if (open < 0) break;
      return open;
    case ActionKind::kClose:
    case ActionKind::kCloseWithStart:
      if (close < 0) break;
      return close;
    case ActionKind::kEnd:
      return end;
    default:
      break;
  }
  throw ConfigError("action is not predicted by this scheme");
}

int input_id(const Action& a, int tokens) {
  auto sym = [tokens](InputSymbol s) { return tokens + static_cast<int>(s); };
  switch (a.kind) {
    case ActionKind::kGen:
      if (a.value < 0 || a.value >= tokens) throw ConfigError("token id outside the vocabulary");
      return a.value;
    case ActionKind::kBos: return sym(InputSymbol::kBos);
    case ActionKind::kOpen: return sym(InputSymbol::kOpen);
    case ActionKind::kClose:
    case ActionKind::kCloseWithStart: return sym(InputSymbol::kClose);
    case ActionKind::kDupClose: return sym(InputSymbol::kDup);
    case ActionKind::kEnd: return sym(InputSymbol::kEnd);
  }
  throw ConfigError("unknown action");
}

int EncodedSequence::prediction_rows() const {
  return static_cast<int>(std::count_if(targets.begin(), targets.end(), [](int t) { return t >= 0; }));
}

ActionSeq sentence_actions(const Tree& normalized, const ModelScheme& scheme) {
  if (!scheme.structured) {
    ActionSeq seq;
    for (int t : normalized.tokens()) seq.actions.push_back(Action::gen(t));
    return seq;
  }
  Tree t = normalized;
  if (scheme.transform == TreeTransform::kLeftBranching) t = make_left_branching(normalized.tokens());
  if (scheme.transform == TreeTransform::kRightBranching) t = make_right_branching(normalized.tokens());
  if (scheme.form == TreeForm::kBinary) t = left_binarize(t);
  return linearize(t, scheme.form, scheme.direction);
}

std::vector<Action> document_stream(const std::vector<ActionSeq>& sentences, const ModelScheme& scheme) {
  std::vector<Action> s{Action::bos()};
  for (const auto& seq : sentences) {
    const ActionSeq a = scheme.internal() ? augment_for_internal(seq) : seq;
    s.insert(s.end(), a.actions.begin(), a.actions.end());
    s.push_back(Action::end());
  }
  return s;
}

EncodedSequence encode(const std::vector<Action>& stream, const ModelScheme& scheme, const OutputSpace& out) {
  EncodedSequence e;
  e.stream = stream;
  const int n = static_cast<int>(stream.size());
  if (n == 0) throw ConfigError("empty stream");
  e.input_ids.resize(static_cast<size_t>(n));
  e.composed_at.assign(static_cast<size_t>(n), -1);
  e.composition_rows.assign(static_cast<size_t>(n), 0);
  e.targets.assign(static_cast<size_t>(n), -1);
  auto allowed = std::make_shared<ad::Allowed>(ad::Allowed::Zero(n, n));

  MaskBuilder mask(MaskPolicy::from(scheme));
  std::optional<StackState> state;
  int offset = 0;
  int sentence_base = 0;  // global index of the sentence's first composition

  for (int q = 0; q < n; ++q) {
    const Action& a = stream[static_cast<size_t>(q)];
    if (!scheme.structured && a.kind != ActionKind::kGen && a.kind != ActionKind::kEnd && a.kind != ActionKind::kBos) {
      throw ConfigError("token-only scheme given a structural action");
    }
    auto row = mask.push(a);
    for (int k : row.attend) (*allowed)(q, k) = 1;
    e.composition_rows[static_cast<size_t>(q)] = row.composition ? 1 : 0;
    e.input_ids[static_cast<size_t>(q)] = input_id(a, out.tokens);

    if (scheme.structured) {
      if (a.kind == ActionKind::kEnd) {
        if (!state || !state->complete()) throw IllegalAction(q, "END before the sentence is complete");
        state.reset();
        offset = q;
        sentence_base = static_cast<int>(e.compositions.size());
      } else if (a.kind != ActionKind::kBos) {
        if (!state) state.emplace(scheme.form, scheme.direction);
        state->apply(a);
        if (scheme.external() && a.is_close()) {
          const auto& closed = *state->last_closed();
          CompositionSpec spec;
          spec.position = q;
          for (const auto& ch : closed.children) {
            CompositionChild c;
            if (ch.constituent) {
              c.composed = true;
              c.index = sentence_base + ch.constituent_id;
              if (c.index >= static_cast<int>(e.compositions.size())) {
                throw ConfigError("composition order violates bottom-up dependencies");
              }
            } else {
              c.token = ch.token;
            }
            spec.children.push_back(c);
          }
          e.composed_at[static_cast<size_t>(q)] = static_cast<int>(e.compositions.size());
          e.compositions.push_back(std::move(spec));
        }
      }
    }

    if (q + 1 < n) {
      const Action& next = stream[static_cast<size_t>(q + 1)];
      if (next.kind == ActionKind::kDupClose) {
        if (!row.composition) throw ConfigError("duplicate ')' not preceded by a composition row");
      } else if (row.composition) {
        throw ConfigError("composition row not followed by a duplicate ')'");
      } else {
        e.targets[static_cast<size_t>(q)] = out.class_of(next);
      }
      if (next.kind == ActionKind::kCloseWithStart) {
        if (!scheme.has_pointer()) throw ConfigError("start position given to a scheme without a pointer");
        if (!state) throw IllegalAction(q + 1, "close with nothing to close");
        const auto& items = state->items();
        const size_t usable = scheme.width1_starts || items.empty() ? items.size() : items.size() - 1;
        ad::PointerRow pr;
        pr.query = q;
        pr.gold = -1;
        for (size_t i = 0; i < usable; ++i) {
          if (items[i].position == next.value) pr.gold = static_cast<int>(i);
          pr.candidates.push_back(offset + items[i].position);
        }
        if (pr.gold < 0) throw IllegalAction(q + 1, "start position is not a feasible start");
        e.pointer_rows.push_back(std::move(pr));
      }
    }
  }
  e.allowed = allowed;
  return e;
}

double joint_close_probability(double p_close, double p_start) { return p_close * p_start; }

std::vector<double> pointer_distribution(const ad::Row& query, const ad::Mat& theta, const std::vector<ad::Row>& reps,
                                         const std::vector<int>& feasible) {
  if (feasible.empty()) throw ConfigError("pointer distribution over an empty start set");
  const ad::Row u = query * theta;
  ad::Row s(static_cast<long>(feasible.size()));
  for (size_t i = 0; i < feasible.size(); ++i) {
    const int p = feasible[i];
    if (p < 0 || p >= static_cast<int>(reps.size())) throw ConfigError("start position out of range");
    s(static_cast<long>(i)) = u.dot(reps[static_cast<size_t>(p)]);
  }
  ad::softmax_in_place(s);
  std::vector<double> out(reps.size(), 0.0);
  for (size_t i = 0; i < feasible.size(); ++i) out[static_cast<size_t>(feasible[i])] = s(static_cast<long>(i));
  return out;
}

// ---------------------------------------------------------------------------

Model::Model(const ModelConfig& config, const ModelScheme& scheme, int tokens)
    : config_(config), scheme_(scheme), tokens_(tokens), outputs_(OutputSpace::for_scheme(scheme, tokens)) {
  config_.validate();
  if (tokens <= 0) throw ConfigError("vocabulary is empty");
  if (scheme_.has_pointer() && config_.n_heads < 2) throw ConfigError("the start pointer needs at least two heads");
  std::mt19937_64 rng(config_.seed);
  const int d = config_.d_model;
  add_param("embed.tokens", input_vocab(), d, 0.02, rng);
  add_param("embed.positions", config_.max_seq_len, d, 0.02, rng);
  for (int l = 0; l < config_.n_layers; ++l) add_block_params("layers." + std::to_string(l) + ".", d, config_.d_ff, rng);
  add_param("final.ln.g", 1, d, -1.0, rng);
  add_param("final.ln.b", 1, d, 0.0, rng);
  add_param("out.W", d, outputs_.size, 0.02, rng);
  add_param("out.b", 1, outputs_.size, 0.0, rng);
  if (scheme_.has_pointer()) add_param("pointer.theta", pointer_width(), pointer_width(), 0.02, rng);
  if (scheme_.external()) {
    const int c = config_.d_comp;
    add_param("comp.down.W", d, c, 0.02, rng);
    add_param("comp.down.b", 1, c, 0.0, rng);
    add_param("comp.agg", 1, c, 0.02, rng);
    add_param("comp.positions", config_.max_children + 1, c, 0.02, rng);
    for (int l = 0; l < config_.comp_layers; ++l) add_block_params("comp.layers." + std::to_string(l) + ".", c, 4 * c, rng);
    add_param("comp.ln.g", 1, c, -1.0, rng);
    add_param("comp.ln.b", 1, c, 0.0, rng);
    add_param("comp.up.W", c, d, 0.02, rng);
    add_param("comp.up.b", 1, d, 0.0, rng);
  }
}

// std < 0 marks a layer-norm gain (all ones); std == 0 a zero bias.
void Model::add_param(const std::string& name, long rows, long cols, double std, std::mt19937_64& rng) {
  ad::Param p;
  if (std < 0) {
    p.value = ad::Mat::Ones(rows, cols);
  } else if (std == 0) {
    p.value = ad::Mat::Zero(rows, cols);
  } else {
    std::normal_distribution<double> dist(0.0, std);
    p.value.resize(rows, cols);
    for (long i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
  }
  p.grad = ad::Mat::Zero(rows, cols);
  params_.emplace(name, std::move(p));
}

void Model::add_block_params(const std::string& prefix, int width, int ff, std::mt19937_64& rng) {
  add_param(prefix + "ln1.g", 1, width, -1.0, rng);
  add_param(prefix + "ln1.b", 1, width, 0.0, rng);
  for (const char* m : {"q", "k", "v", "o"}) {
    add_param(prefix + "attn." + m + ".W", width, width, 0.02, rng);
    add_param(prefix + "attn." + m + ".b", 1, width, 0.0, rng);
  }
  add_param(prefix + "ln2.g", 1, width, -1.0, rng);
  add_param(prefix + "ln2.b", 1, width, 0.0, rng);
  add_param(prefix + "ff.1.W", width, ff, 0.02, rng);
  add_param(prefix + "ff.1.b", 1, ff, 0.0, rng);
  add_param(prefix + "ff.2.W", ff, width, 0.02, rng);
  add_param(prefix + "ff.2.b", 1, width, 0.0, rng);
}

const ad::Mat& Model::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("no parameter named " + name);
  return it->second.value;
}

ad::Param& Model::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("no parameter named " + name);
  return it->second;
}

void Model::zero_grad() {
  for (auto& [_, p] : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

ad::Var Model::p(ad::Tape& tape, const std::string& name) {
  if (cached_tape_ != tape.serial()) {
    cached_.clear();
    cached_tape_ = tape.serial();
  }
  auto it = cached_.find(name);
  if (it != cached_.end()) return it->second;
  ad::Var v = tape.param(param(name));
  cached_.emplace(name, v);
  return v;
}

ad::Var Model::block(ad::Tape& tape, const std::string& prefix, ad::Var x, std::shared_ptr<const ad::Allowed> allowed,
                     int heads, ad::Var* head_out) {
  using namespace ad;
  auto linear = [&](Var in, const std::string& name) {
    return add_row(matmul(in, p(tape, prefix + name + ".W")), p(tape, prefix + name + ".b"));
  };
  Var a = layer_norm(x, p(tape, prefix + "ln1.g"), p(tape, prefix + "ln1.b"));
  Var att = masked_attention(linear(a, "attn.q"), linear(a, "attn.k"), linear(a, "attn.v"), std::move(allowed), heads);
  if (head_out) *head_out = att;
  x = add(x, linear(att, "attn.o"));
  Var b = layer_norm(x, p(tape, prefix + "ln2.g"), p(tape, prefix + "ln2.b"));
  return add(x, linear(gelu(linear(b, "ff.1")), "ff.2"));
}

ad::Var Model::token_child(ad::Tape& tape, int token) {
  using namespace ad;
  Var e = gather_rows(p(tape, "embed.tokens"), {token});
  return add_row(matmul(e, p(tape, "comp.down.W")), p(tape, "comp.down.b"));
}

ad::Var Model::compose(ad::Tape& tape, const std::vector<ad::Var>& children) {
  using namespace ad;
  if (!scheme_.external()) throw ConfigError("scheme has no external composition module");
  if (children.empty()) throw ConfigError("composition of no children");
  const int m = static_cast<int>(children.size());
  if (m > config_.max_children) throw ConfigError("constituent has more children than max_children");
  std::vector<Var> rows{p(tape, "comp.agg")};
  rows.insert(rows.end(), children.begin(), children.end());
  std::vector<int> pos(static_cast<size_t>(m) + 1);
  for (int i = 0; i <= m; ++i) pos[static_cast<size_t>(i)] = i;
  Var x = add(concat_rows(rows), gather_rows(p(tape, "comp.positions"), pos));
  auto& full = full_masks_[m + 1];
  if (!full) full = std::make_shared<const Allowed>(Allowed::Ones(m + 1, m + 1));
  for (int l = 0; l < config_.comp_layers; ++l) {
    x = block(tape, "comp.layers." + std::to_string(l) + ".", x, full, config_.comp_heads, nullptr);
  }
  x = layer_norm(x, p(tape, "comp.ln.g"), p(tape, "comp.ln.b"));
  return gather_rows(x, {0});
}

ad::Row Model::compose_external(const std::vector<ad::Row>& children) {
  ad::Tape tape;
  std::vector<ad::Var> kids;
  for (const auto& c : children) {
    if (c.size() != config_.d_comp) throw ConfigError("child width differs from d_comp");
    kids.push_back(tape.constant(c));
  }
  ad::Var s = compose(tape, kids);
  ad::Var up = ad::add_row(ad::matmul(s, p(tape, "comp.up.W")), p(tape, "comp.up.b"));
  return up.value().row(0);
}

Model::Forward Model::forward(ad::Tape& tape, const EncodedSequence& seq, const ForwardOptions& opts) {
  using namespace ad;
  const int n = seq.length();
  if (n > config_.max_seq_len) throw ConfigError("sequence longer than max_seq_len");
  if (static_cast<int>(seq.input_ids.size()) != n || seq.allowed->rows() != n) {
    throw ConfigError("encoded sequence shapes disagree");
  }
  Var x = gather_rows(p(tape, "embed.tokens"), seq.input_ids);
  if (scheme_.external() && !seq.compositions.empty()) {
    std::vector<Var> composed;
    composed.reserve(seq.compositions.size());
    for (const auto& c : seq.compositions) {
      std::vector<Var> kids;
      for (const auto& ch : c.children) {
        kids.push_back(ch.composed ? composed[static_cast<size_t>(ch.index)] : token_child(tape, ch.token));
      }
      composed.push_back(compose(tape, kids));
    }
    Var up = add_row(matmul(concat_rows(composed), p(tape, "comp.up.W")), p(tape, "comp.up.b"));
    std::vector<int> pick(static_cast<size_t>(n));
    for (int q = 0; q < n; ++q) {
      const int c = seq.composed_at[static_cast<size_t>(q)];
      pick[static_cast<size_t>(q)] = c >= 0 ? n + c : q;
    }
    x = gather_rows(concat_rows({x, up}), pick);
  } else if (scheme_.external()) {
    for (int c : seq.composed_at) {
      if (c >= 0) throw ConfigError("composition index without a composition schedule");
    }
  }
  std::vector<int> pos(static_cast<size_t>(n));
  for (int q = 0; q < n; ++q) pos[static_cast<size_t>(q)] = q;
  x = add(x, gather_rows(p(tape, "embed.positions"), pos));
  if (opts.input_delta) x = add(x, tape.constant(*opts.input_delta));
  Var heads;
  for (int l = 0; l < config_.n_layers; ++l) {
    x = block(tape, "layers." + std::to_string(l) + ".", x, seq.allowed, config_.n_heads,
              l + 1 == config_.n_layers ? &heads : nullptr);
  }
  Forward f;
  f.hidden = layer_norm(x, p(tape, "final.ln.g"), p(tape, "final.ln.b"));
  f.logits = add_row(matmul(f.hidden, p(tape, "out.W")), p(tape, "out.b"));
  f.pointer = slice_cols(heads, 0, pointer_width());
  return f;
}

ad::Var Model::total_nll(ad::Tape& tape, const EncodedSequence& seq, const ForwardOptions& opts) {
  Forward f = forward(tape, seq, opts);
  ad::Var nll = ad::cross_entropy(f.logits, seq.targets);
  if (!seq.pointer_rows.empty()) {
    nll = ad::sum({nll, ad::pointer_nll(f.pointer, p(tape, "pointer.theta"), seq.pointer_rows)});
  }
  return nll;
}

ad::Var Model::loss(ad::Tape& tape, const std::vector<EncodedSequence>& batch) {
  std::vector<ad::Var> parts;
  long rows = 0;
  for (const auto& s : batch) {
    parts.push_back(total_nll(tape, s));
    rows += s.prediction_rows();
  }
  if (rows == 0) throw ConfigError("batch has no prediction rows");
  return ad::scale(ad::sum(parts), 1.0 / static_cast<double>(rows));
}

double Model::loss_value(const std::vector<EncodedSequence>& batch) {
  // One tape per sequence keeps memory bounded on whole corpora.
  double total = 0.0;
  long rows = 0;
  for (const auto& s : batch) {
    ad::Tape tape;
    total += total_nll(tape, s).value()(0, 0);
    rows += s.prediction_rows();
  }
  if (rows == 0) throw ConfigError("batch has no prediction rows");
  return total / static_cast<double>(rows);
}

double Model::log_prob(const EncodedSequence& seq) {
  ad::Tape tape;
  return -total_nll(tape, seq).value()(0, 0);
}

}  // namespace synlm
