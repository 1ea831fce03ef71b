#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "support.hpp"
#include "synlm/error.hpp"
#include "synlm/masking.hpp"

using namespace synlm;

namespace {

Tree tree_for(std::mt19937_64& rng, int n, TreeForm form) {
  Tree t = testing::random_tree(rng, n, false);
  return form == TreeForm::kBinary ? left_binarize(t) : t;
}

VariantConfig with_masking(VariantConfig v, Masking m) {
  v.masking = m;
  return v;
}

}  // namespace

TEST_CASE("duplicate insertion") {
  WordVocabulary v;
  Tree t = parse_bracketed("( A ( B C ) )", v);
  auto aug = make_stream(augment_for_internal(linearize(t, TreeForm::kBinary, Direction::kTopDown)));
  CHECK(to_string(ActionSeq{aug}, v) == "<bos> ( A ( B C ) )' ) )'");
  CHECK(to_string(augment_for_internal(parse_actions("A B )", v)), v) == "A B ) )'");
  CHECK(augment_for_internal(parse_actions("word", v)) == parse_actions("word", v));
  CHECK(to_string(augment_for_internal(parse_actions("a b c )@2 )@1", v)), v) == "a b c )@2 )' )@1 )'");
}

TEST_CASE("augmented length is L + N") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    int n = std::uniform_int_distribution<int>(1, 20)(rng);
    for (auto dir : {Direction::kTopDown, Direction::kBottomUp}) {
      auto seq = linearize(testing::random_tree(rng, n, false), TreeForm::kNonBinary, dir);
      auto aug = augment_for_internal(seq);
      CHECK(aug.size() == seq.size() + seq.nonterminal_count());
      CHECK(aug.dup_count() == seq.nonterminal_count());
      // Starts still point at the same items after remapping.
      StackState s(TreeForm::kNonBinary, dir);
      for (const auto& a : aug.actions) s.apply(a);
      CHECK(s.complete());
    }
  }
}

TEST_CASE("mask examples") {
  WordVocabulary v;
  Tree bi = parse_bracketed("( ( Write ( an essay ) ) quickly )", v);
  auto cfg = VariantConfig::parse("Bi-Up-In-M");
  auto stream = make_stream(augment_for_internal(linearize(bi, TreeForm::kBinary, Direction::kBottomUp)));
  CHECK(to_string(ActionSeq{stream}, v) == "<bos> Write an essay ) )' ) )' quickly ) )'");
  auto m = build_mask(stream, cfg);
  // Row 4 closes (an essay): positions 2 and 3.
  CHECK(m.composition_row(4));
  for (int k = 0; k < m.size(); ++k) CHECK(m(4, k) == (k == 2 || k == 3));
  // Row 6 closes (Write (an essay)): Write at 1 and the inner close at 4.
  for (int k = 0; k < m.size(); ++k) CHECK(m(6, k) == (k == 1 || k == 4));
  // The duplicate at 7 sees <bos>, the close at 6, and itself.
  for (int k = 0; k < m.size(); ++k) CHECK(m(7, k) == (k == 0 || k == 6 || k == 7));

  CHECK(m(0, 0));
  for (int k = 1; k < m.size(); ++k) CHECK_FALSE(m(0, k));

  MaskMatrix one = reference_mask({Action::bos()}, cfg);
  CHECK(one.size() == 1);
  CHECK(one(0, 0));

  CHECK(render_grid(build_mask(make_stream(parse_actions("a b )", v)), VariantConfig::parse("Bi-Up-Ex-M"))) ==
        "#...\n##..\n###.\n#..#\n");
  CHECK(render_grid(build_mask(make_stream(parse_actions("a b ) )'", v)), VariantConfig::parse("Bi-Up-In-M"))) ==
        "#....\n##...\n###..\n.oo..\n#..##\n");
}

TEST_CASE("external unmasked is plain causal attention") {
  std::mt19937_64 rng(19);
  for (const auto& v : VariantConfig::all()) {
    if (v.composition != Composition::kExternal || v.masking != Masking::kUnmasked) continue;
    for (int i = 0; i < 50; ++i) {
      auto e = testing::emit_tree(tree_for(rng, std::uniform_int_distribution<int>(1, 15)(rng), v.form), v);
      auto m = build_mask(e.stream, v);
      for (int q = 0; q < m.size(); ++q) {
        for (int k = 0; k < m.size(); ++k) CHECK(m(q, k) == (k <= q));
      }
    }
  }
}

TEST_CASE("masked and unmasked internal masks differ exactly inside composed spans") {
  WordVocabulary v;
  Tree t = parse_bracketed("( A ( B C ) )", v);
  auto e = testing::emit_tree(t, VariantConfig::parse("Bi-Dn-In-M"));
  auto mm = build_mask(e.stream, VariantConfig::parse("Bi-Dn-In-M"));
  auto nm = build_mask(e.stream, VariantConfig::parse("Bi-Dn-In-Nm"));
  const std::set<int> dups(e.dups.begin(), e.dups.end());
  std::set<std::pair<int, int>> expected;
  for (const auto& [close, first] : e.first_of) {
    const int dup = close + 1;
    for (int q = dup; q < mm.size(); ++q) {
      if (mm.composition_row(q)) continue;
      for (int k = first; k < close; ++k) {
        if (!dups.count(k)) expected.insert({q, k});
      }
    }
  }
  std::set<std::pair<int, int>> diff;
  for (int q = 0; q < mm.size(); ++q) {
    for (int k = 0; k < mm.size(); ++k) {
      if (mm(q, k) != nm(q, k)) {
        CHECK(nm(q, k));
        diff.insert({q, k});
      }
    }
  }
  CHECK_FALSE(expected.empty());
  CHECK(diff == expected);
}

TEST_CASE("incremental and reference masks agree on random documents") {
  std::mt19937_64 rng(23);
  for (const auto& v : VariantConfig::all()) {
    const bool internal = v.composition == Composition::kInternal;
    for (int i = 0; i < 120; ++i) {
      std::vector<ActionSeq> sentences;
      const int count = std::uniform_int_distribution<int>(1, 3)(rng);
      for (int s = 0; s < count; ++s) {
        const int n = std::uniform_int_distribution<int>(1, 8)(rng);
        if (i % 2 == 0) {
          sentences.push_back(linearize(tree_for(rng, n, v.form), v.form, v.direction));
        } else {
          sentences.push_back(testing::random_walk(rng, v.form, v.direction, n));
        }
      }
      auto stream = testing::document_stream(sentences, internal);
      if (std::bernoulli_distribution(0.3)(rng)) stream.pop_back();
      for (bool open_masking : {true, false}) {
        auto policy = MaskPolicy::from(v, open_masking);
        CHECK(build_mask(stream, policy) == reference_mask(stream, policy));
      }
    }
  }
}

TEST_CASE("structural laws of every variant") {
  std::mt19937_64 rng(29);
  for (const auto& v : VariantConfig::all()) {
    const bool internal = v.composition == Composition::kInternal;
    for (int i = 0; i < 100; ++i) {
      const int n = std::uniform_int_distribution<int>(1, 20)(rng);
      auto e = testing::emit_tree(tree_for(rng, n, v.form), v);
      auto m = build_mask(e.stream, v);
      auto nm = build_mask(e.stream, with_masking(v, Masking::kUnmasked));
      auto mm = build_mask(e.stream, with_masking(v, Masking::kMasked));
      for (int q = 0; q < m.size(); ++q) {
        int row_count = 0;
        for (int k = 0; k < m.size(); ++k) {
          if (k > q) CHECK_FALSE(m(q, k));
          row_count += m(q, k);
          if (mm(q, k)) CHECK(nm(q, k));
        }
        CHECK(row_count >= 1);
      }
      for (int d : e.dups) {
        for (int q = d + 1; q < m.size(); ++q) CHECK_FALSE(m(q, d));
      }
      if (!internal) {
        for (const auto& a : e.stream) CHECK(a.kind != ActionKind::kDupClose);
      }
      for (int q = 0; q < m.size(); ++q) {
        const bool is_comp = internal && e.children_of.count(q);
        CHECK(m.composition_row(q) == is_comp);
        if (!is_comp) continue;
        const auto& kids = e.children_of.at(q);
        std::vector<int> attended;
        for (int k = 0; k < m.size(); ++k) {
          if (m(q, k)) attended.push_back(k);
        }
        CHECK(attended == kids);
      }
      if (v.masking == Masking::kMasked) {
        for (const auto& [close, first] : e.first_of) {
          for (int q = close + 1; q < m.size(); ++q) {
            if (m.composition_row(q)) continue;
            for (int k = first; k < close; ++k) CHECK_FALSE(m(q, k));
          }
        }
      }
      for (int q = 0; q < m.size(); ++q) {
        if (!m.composition_row(q)) CHECK(m(q, 0));
      }
    }
  }
}

TEST_CASE("open positions stay visible when the ablation switch is off") {
  WordVocabulary v;
  auto stream = make_stream(parse_actions("( ( a b ) c )", v));
  auto policy = MaskPolicy::from(VariantConfig::parse("Nb-Dn-Ex-M"), false);
  auto m = build_mask(stream, policy);
  // Row 6 (c) sees both OPENs and the inner close, but not a or b.
  CHECK(m(6, 1));
  CHECK(m(6, 2));
  CHECK_FALSE(m(6, 3));
  CHECK_FALSE(m(6, 4));
  CHECK(m(6, 5));
  auto hidden = build_mask(stream, VariantConfig::parse("Nb-Dn-Ex-M"));
  CHECK(hidden(6, 1));
  CHECK_FALSE(hidden(6, 2));
}

TEST_CASE("mask construction errors") {
  WordVocabulary v;
  CHECK_THROWS_AS(build_mask(make_stream(parse_actions("a b ) )'", v)), VariantConfig::parse("Bi-Up-Ex-M")),
                  ConfigError);
  CHECK_THROWS_AS(build_mask(make_stream(parse_actions("a b ) c", v)), VariantConfig::parse("Bi-Up-In-M")),
                  ConfigError);
  CHECK_THROWS_AS(build_mask(make_stream(parse_actions("a b )", v)), VariantConfig::parse("Bi-Up-In-M")),
                  ConfigError);
  CHECK_THROWS_AS(build_mask(make_stream(parse_actions("a )", v)), VariantConfig::parse("Bi-Up-Ex-M")),
                  IllegalAction);
  CHECK_THROWS_AS(build_mask(parse_actions("a b", v).actions, VariantConfig::parse("Bi-Up-Ex-M")), ConfigError);
  CHECK_THROWS_AS(build_mask(make_stream(parse_actions("a b <end>", v)), VariantConfig::parse("Bi-Up-Ex-M")),
                  IllegalAction);
}

TEST_CASE("pgm output") {
  WordVocabulary v;
  auto m = build_mask(make_stream(parse_actions("a b ) )'", v)), VariantConfig::parse("Bi-Up-In-M"));
  std::ostringstream os;
  write_pgm(m, os);
  const std::string s = os.str();
  CHECK(s.rfind("P5\n5 5\n255\n", 0) == 0);
  CHECK(s.size() == std::string("P5\n5 5\n255\n").size() + 25);
}
