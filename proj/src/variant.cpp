#include "synlm/variant.hpp"

#include <sstream>

#include "synlm/error.hpp"

namespace synlm {

namespace {

std::vector<std::string> split_dash(std::string_view s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == '-') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

TreeForm parse_form(const std::string& s) {
  if (s == "Bi") return TreeForm::kBinary;
  if (s == "Nb") return TreeForm::kNonBinary;
  throw ParseError("unknown tree form '" + s + "' (expected Bi or Nb)");
}

Direction parse_direction(const std::string& s) {
  if (s == "Dn") return Direction::kTopDown;
  if (s == "Up") return Direction::kBottomUp;
  throw ParseError("unknown linearization '" + s + "' (expected Dn or Up)");
}

}  // namespace

std::string form_name(TreeForm f) { return f == TreeForm::kBinary ? "Bi" : "Nb"; }
std::string direction_name(Direction d) { return d == Direction::kTopDown ? "Dn" : "Up"; }

VariantConfig VariantConfig::parse(std::string_view name) {
  auto parts = split_dash(name);
  if (parts.size() != 4) throw ParseError("variant must look like Bi-Up-Ex-Nm: '" + std::string(name) + "'");
  VariantConfig v;
  v.form = parse_form(parts[0]);
  v.direction = parse_direction(parts[1]);
  if (parts[2] == "In") {
    v.composition = Composition::kInternal;
  } else if (parts[2] == "Ex") {
    v.composition = Composition::kExternal;
  } else {
    throw ParseError("unknown composition '" + parts[2] + "' (expected In or Ex)");
  }
  if (parts[3] == "M") {
    v.masking = Masking::kMasked;
  } else if (parts[3] == "Nm") {
    v.masking = Masking::kUnmasked;
  } else {
    throw ParseError("unknown masking '" + parts[3] + "' (expected M or Nm)");
  }
  return v;
}

std::string VariantConfig::name() const {
  std::ostringstream os;
  os << form_name(form) << '-' << direction_name(direction) << '-'
     << (composition == Composition::kInternal ? "In" : "Ex") << '-'
     << (masking == Masking::kMasked ? "M" : "Nm");
  return os.str();
}

std::array<VariantConfig, 16> VariantConfig::all() {
  std::array<VariantConfig, 16> out;
  int i = 0;
  for (auto f : {TreeForm::kBinary, TreeForm::kNonBinary}) {
    for (auto d : {Direction::kTopDown, Direction::kBottomUp}) {
      for (auto c : {Composition::kInternal, Composition::kExternal}) {
        for (auto m : {Masking::kMasked, Masking::kUnmasked}) out[i++] = VariantConfig{f, d, c, m};
      }
    }
  }
  return out;
}

const std::vector<std::string>& ModelScheme::baseline_names() {
  static const std::vector<std::string> names = {
      "token-lm",     "tree-lm-Nb-Dn",  "tree-lm-Bi-Dn",   "tree-lm-Bi-Up",
      "tree-lm-Nb-Up", "left-branching", "right-branching",
  };
  return names;
}

ModelScheme ModelScheme::from_variant(const VariantConfig& v) {
  ModelScheme s;
  s.name = v.name();
  s.structured = true;
  s.form = v.form;
  s.direction = v.direction;
  s.composition = v.composition == Composition::kInternal ? CompositionMode::kInternal
                                                          : CompositionMode::kExternal;
  s.masking = v.masking;
  return s;
}

ModelScheme ModelScheme::parse(std::string_view name) {
  std::string n(name);
  ModelScheme s;
  s.name = n;
  if (n == "token-lm") {
    s.structured = false;
    return s;
  }
  if (n == "left-branching" || n == "right-branching") {
    s.form = TreeForm::kBinary;
    s.direction = Direction::kTopDown;
    s.transform = n == "left-branching" ? TreeTransform::kLeftBranching : TreeTransform::kRightBranching;
    return s;
  }
  if (n.rfind("tree-lm-", 0) == 0) {
    auto parts = split_dash(n.substr(8));
    if (parts.size() != 2) throw ParseError("unknown baseline '" + n + "'");
    s.form = parse_form(parts[0]);
    s.direction = parse_direction(parts[1]);
    return s;
  }
  try {
    return from_variant(VariantConfig::parse(n));
  } catch (const ParseError& e) {
    throw ParseError("unknown model '" + n + "': not a baseline, and " + e.what());
  }
}

VariantConfig ModelScheme::variant() const {
  VariantConfig v;
  v.form = form;
  v.direction = direction;
  v.composition = composition == CompositionMode::kInternal ? Composition::kInternal : Composition::kExternal;
  v.masking = masking;
  return v;
}

}  // namespace synlm
