#include "synlm/masking.hpp"

#include <ostream>

#include "synlm/error.hpp"

namespace synlm {

MaskPolicy MaskPolicy::from(const VariantConfig& cfg, bool mask_open_positions) {
  MaskPolicy p;
  p.form = cfg.form;
  p.direction = cfg.direction;
  p.internal = cfg.composition == Composition::kInternal;
  p.masked = cfg.masking == Masking::kMasked;
  p.mask_open_positions = mask_open_positions;
  return p;
}

MaskPolicy MaskPolicy::from(const ModelScheme& scheme) {
  if (scheme.composition == CompositionMode::kNone) {
    MaskPolicy p;
    p.causal_only = true;
    p.form = scheme.form;
    p.direction = scheme.direction;
    return p;
  }
  return from(scheme.variant(), scheme.mask_open_positions);
}

ActionSeq augment_for_internal(const ActionSeq& seq) {
  // closes_before[p]: closes among plain positions 1..p-1.
  std::vector<int> closes_before(seq.actions.size() + 2, 0);
  for (size_t i = 0; i < seq.actions.size(); ++i) {
    closes_before[i + 2] = closes_before[i + 1] + (seq.actions[i].is_close() ? 1 : 0);
  }
  ActionSeq out;
  out.actions.reserve(seq.actions.size() * 2);
  for (const auto& a : seq.actions) {
    if (a.kind == ActionKind::kDupClose) throw ConfigError("sequence is already augmented");
    Action b = a;
    if (b.kind == ActionKind::kCloseWithStart) {
      if (b.value < 1 || b.value >= static_cast<int>(closes_before.size())) {
        throw ConfigError("start position out of range");
      }
      b.value += closes_before[static_cast<size_t>(b.value)];
    }
    out.actions.push_back(b);
    if (a.is_close()) out.actions.push_back(Action::dup());
  }
  return out;
}

std::vector<Action> make_stream(const ActionSeq& seq) {
  std::vector<Action> s;
  s.reserve(seq.actions.size() + 1);
  s.push_back(Action::bos());
  s.insert(s.end(), seq.actions.begin(), seq.actions.end());
  return s;
}

// ---------------------------------------------------------------------------

MaskBuilder::MaskBuilder(MaskPolicy policy) : policy_(policy) {}

std::vector<int> MaskBuilder::visible_row(int q) const {
  std::vector<int> row;
  for (int k = 0; k < q; ++k) {
    if (visible_[static_cast<size_t>(k)]) row.push_back(k);
  }
  row.push_back(q);
  return row;
}

void MaskBuilder::hide_inside(int first, int close) {
  const bool keep_opens = !policy_.mask_open_positions && policy_.direction == Direction::kTopDown;
  for (int k = first; k < close; ++k) {
    if (keep_opens && is_open_[static_cast<size_t>(k)]) continue;
    visible_[static_cast<size_t>(k)] = 0;
  }
}

MaskBuilder::Row MaskBuilder::push(const Action& a) {
  const int q = size();
  visible_.push_back(0);
  is_open_.push_back(a.kind == ActionKind::kOpen ? 1 : 0);
  auto& here = visible_.back();

  if (q == 0) {
    if (a.kind != ActionKind::kBos) throw ConfigError("stream must start with <bos>");
    here = 1;
    return {{0}, false};
  }
  if (a.kind == ActionKind::kBos) throw ConfigError("<bos> may only appear at position 0");

  if (policy_.causal_only) {
    if (a.kind == ActionKind::kDupClose) throw ConfigError("duplicate ')' in a causal-mask sequence");
    here = 1;
    Row r;
    r.attend.resize(static_cast<size_t>(q) + 1);
    for (int k = 0; k <= q; ++k) r.attend[static_cast<size_t>(k)] = k;
    return r;
  }

  if (expect_dup_ && a.kind != ActionKind::kDupClose) {
    throw ConfigError("duplicate mismatch: internal composition needs ')'' after every close");
  }

  if (a.kind == ActionKind::kDupClose) {
    if (!policy_.internal) throw ConfigError("duplicate mismatch: ')'' without internal composition");
    if (!expect_dup_) throw ConfigError("duplicate ')' must follow a close");
    sentence_->apply(a);
    expect_dup_ = false;
    Row r{visible_row(q), false};
    here = 0;  // hidden from every later row
    return r;
  }

  if (a.kind == ActionKind::kEnd) {
    if (!sentence_ || !sentence_->complete()) throw IllegalAction(q, "END before the sentence is complete");
    Row r{visible_row(q), false};
    here = 1;
    sentence_.reset();
    offset_ = q;
    return r;
  }

  if (!sentence_) sentence_.emplace(policy_.form, policy_.direction);
  sentence_->apply(a);

  if (const auto& closed = sentence_->last_closed()) {
    const int first = absolute(closed->first_position);
    if (policy_.internal) {
      Row r;
      r.composition = true;
      for (const auto& ch : closed->children) r.attend.push_back(absolute(ch.position));
      if (policy_.masked) hide_inside(first, q);
      here = 1;
      expect_dup_ = true;
      return r;
    }
    if (policy_.masked) hide_inside(first, q);
    Row r{visible_row(q), false};
    here = 1;
    return r;
  }

  Row r{visible_row(q), false};
  here = 1;
  return r;
}

MaskMatrix build_mask(const std::vector<Action>& stream, const MaskPolicy& policy) {
  MaskBuilder b(policy);
  MaskMatrix m(static_cast<int>(stream.size()));
  for (size_t q = 0; q < stream.size(); ++q) {
    auto row = b.push(stream[q]);
    for (int k : row.attend) m.set(static_cast<int>(q), k, true);
    m.set_composition_row(static_cast<int>(q), row.composition);
  }
  if (policy.internal && !policy.causal_only && !stream.empty() && stream.back().is_close()) {
    throw ConfigError("duplicate mismatch: stream ends right after a close");
  }
  return m;
}

MaskMatrix build_mask(const std::vector<Action>& stream, const VariantConfig& cfg) {
  return build_mask(stream, MaskPolicy::from(cfg));
}

// ---------------------------------------------------------------------------
// Reference construction

namespace {

struct RefUnit {
  bool marker = false;  // an OPEN waiting for its CLOSE
  int first = 0;
  int rep = 0;
};

struct RefConstituent {
  int first = 0;
  int close = 0;
  std::vector<int> child_reps;
};

struct RefParse {
  std::vector<RefConstituent> closed;
  std::vector<int> dup_positions;
  std::vector<int> open_positions;
};

// Parses stream[0..last] from scratch. Start positions are sentence-relative.
RefParse reference_parse(const std::vector<Action>& stream, int last, const MaskPolicy& policy) {
  RefParse out;
  std::vector<RefUnit> units;
  int sentence_start = 0;
  for (int p = 1; p <= last; ++p) {
    const Action& a = stream[static_cast<size_t>(p)];
    switch (a.kind) {
      case ActionKind::kEnd:
        units.clear();
        sentence_start = p;
        break;
      case ActionKind::kDupClose:
        out.dup_positions.push_back(p);
        break;
      case ActionKind::kOpen:
        out.open_positions.push_back(p);
        units.push_back({true, p, p});
        break;
      case ActionKind::kGen:
        units.push_back({false, p, p});
        break;
      case ActionKind::kClose:
      case ActionKind::kCloseWithStart: {
        size_t from = units.size();
        if (policy.direction == Direction::kTopDown) {
          while (from > 0 && !units[from - 1].marker) --from;
          if (from == 0) throw IllegalAction(p, "unmatched close");
          --from;  // include the marker
        } else if (policy.form == TreeForm::kBinary) {
          if (units.size() < 2) throw IllegalAction(p, "close needs two items");
          from = units.size() - 2;
        } else {
          const int start = sentence_start + a.value;
          while (from > 0 && units[from - 1].rep != start) --from;
          if (from == 0) throw IllegalAction(p, "infeasible start");
          --from;
        }
        RefConstituent c;
        c.first = units[from].first;
        c.close = p;
        for (size_t i = from; i < units.size(); ++i) {
          if (!units[i].marker) c.child_reps.push_back(units[i].rep);
        }
        units.resize(from);
        units.push_back({false, c.first, p});
        out.closed.push_back(std::move(c));
        break;
      }
      case ActionKind::kBos:
        throw ConfigError("<bos> may only appear at position 0");
    }
  }
  return out;
}

}  // namespace

MaskMatrix reference_mask(const std::vector<Action>& stream, const MaskPolicy& policy) {
  const int n = static_cast<int>(stream.size());
  MaskMatrix m(n);
  if (n == 0) return m;
  if (stream[0].kind != ActionKind::kBos) throw ConfigError("stream must start with <bos>");
  for (int q = 0; q < n; ++q) {
    if (policy.causal_only) {
      for (int k = 0; k <= q; ++k) m.set(q, k, true);
      continue;
    }
    RefParse parse = reference_parse(stream, q, policy);
    const Action& here = stream[static_cast<size_t>(q)];
    if (policy.internal && here.is_close()) {
      const RefConstituent& c = parse.closed.back();
      for (int k : c.child_reps) m.set(q, k, true);
      m.set_composition_row(q, true);
      continue;
    }
    std::vector<uint8_t> allowed(static_cast<size_t>(q) + 1, 1);
    for (int d : parse.dup_positions) {
      if (d < q) allowed[static_cast<size_t>(d)] = 0;
    }
    if (policy.masked) {
      const bool keep_opens = !policy.mask_open_positions && policy.direction == Direction::kTopDown;
      for (const auto& c : parse.closed) {
        if (c.close > q) continue;
        for (int k = c.first; k < c.close; ++k) {
          bool is_open = false;
          for (int o : parse.open_positions) is_open = is_open || o == k;
          if (keep_opens && is_open) continue;
          allowed[static_cast<size_t>(k)] = 0;
        }
      }
    }
    allowed[static_cast<size_t>(q)] = 1;
    for (int k = 0; k <= q; ++k) m.set(q, k, allowed[static_cast<size_t>(k)] != 0);
  }
  return m;
}

MaskMatrix reference_mask(const std::vector<Action>& stream, const VariantConfig& cfg) {
  return reference_mask(stream, MaskPolicy::from(cfg));
}

// ---------------------------------------------------------------------------

std::string render_grid(const MaskMatrix& m) {
  std::string out;
  for (int q = 0; q < m.size(); ++q) {
    for (int k = 0; k < m.size(); ++k) {
      if (!m(q, k)) {
        out += '.';
      } else {
        out += m.composition_row(q) ? 'o' : '#';
      }
    }
    out += '\n';
  }
  return out;
}

void write_pgm(const MaskMatrix& m, std::ostream& os) {
  os << "P5\n" << m.size() << ' ' << m.size() << "\n255\n";
  for (int q = 0; q < m.size(); ++q) {
    for (int k = 0; k < m.size(); ++k) {
      unsigned char v = 0;
      if (m(q, k)) v = m.composition_row(q) ? 160 : 255;
      os.put(static_cast<char>(v));
    }
  }
}

}  // namespace synlm
