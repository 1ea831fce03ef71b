#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "synlm/error.hpp"
#include "synlm/model.hpp"

using namespace synlm;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 32;
  c.d_comp = 8;
  c.comp_layers = 1;
  c.comp_heads = 2;
  c.max_seq_len = 128;
  c.seed = 5;
  return c;
}

std::vector<ActionSeq> random_sentences(std::mt19937_64& rng, const ModelScheme& scheme, int count, int max_len,
                                        int vocab) {
  std::vector<ActionSeq> out;
  for (int i = 0; i < count; ++i) {
    const int n = std::uniform_int_distribution<int>(1, max_len)(rng);
    Tree t = testing::random_tree(rng, n, false, 0);
    // Relabel tokens at random.
    std::vector<int> toks = t.tokens();
    ActionSeq seq = sentence_actions(t, scheme);
    for (auto& a : seq.actions) {
      if (a.kind == ActionKind::kGen) a.value = std::uniform_int_distribution<int>(0, vocab - 1)(rng);
    }
    out.push_back(seq);
  }
  return out;
}

EncodedSequence random_doc(std::mt19937_64& rng, const Model& m, int sentences, int max_len) {
  return encode(document_stream(random_sentences(rng, m.scheme(), sentences, max_len, m.tokens()), m.scheme()),
                m.scheme(), m.outputs());
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  c.d_model = 30;
  c.n_heads = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.d_comp = 128;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ModelConfig one = tiny_config();
  one.n_heads = 1;
  CHECK_THROWS_AS(Model(one, ModelScheme::parse("Nb-Up-Ex-M"), 10), ConfigError);
}

TEST_CASE("output spaces per scheme") {
  auto dn = OutputSpace::for_scheme(ModelScheme::parse("Nb-Dn-In-M"), 10);
  CHECK(dn.size == 13);
  CHECK(dn.open == 10);
  CHECK(dn.close == 11);
  CHECK(dn.end == 12);
  auto up = OutputSpace::for_scheme(ModelScheme::parse("Bi-Up-Ex-Nm"), 10);
  CHECK(up.size == 12);
  CHECK(up.open == -1);
  auto lm = OutputSpace::for_scheme(ModelScheme::parse("token-lm"), 10);
  CHECK(lm.size == 11);
  CHECK(lm.end == 10);
  CHECK_THROWS_AS(lm.class_of(Action::close()), ConfigError);
}

TEST_CASE("external composition schedule on the example tree") {
  WordVocabulary v;
  Tree bi = parse_bracketed("( ( Write ( an essay ) ) quickly )", v);
  auto scheme = ModelScheme::parse("Bi-Up-Ex-M");
  Model m(tiny_config(), scheme, v.size());
  auto e = encode(document_stream({sentence_actions(bi, scheme)}, scheme), scheme, m.outputs());
  // <bos> Write an essay ) ) quickly ) <end>
  REQUIRE(e.compositions.size() == 3);
  CHECK(e.compositions[0].position == 4);
  CHECK(e.compositions[1].position == 5);
  CHECK(e.compositions[2].position == 7);
  CHECK(e.compositions[0].children.size() == 2);
  CHECK(e.compositions[0].children[0].token == v.lookup("an"));
  CHECK(e.compositions[0].children[1].token == v.lookup("essay"));
  CHECK(e.compositions[1].children[0].token == v.lookup("Write"));
  CHECK(e.compositions[1].children[1].composed);
  CHECK(e.compositions[1].children[1].index == 0);
  CHECK(e.compositions[2].children[0].index == 1);
  CHECK(e.compositions[2].children[1].token == v.lookup("quickly"));
  CHECK(e.composed_at[4] == 0);
  CHECK(e.composed_at[5] == 1);
  CHECK(e.composed_at[7] == 2);
}

TEST_CASE("compositions only depend on earlier compositions") {
  std::mt19937_64 rng(41);
  for (const char* name : {"Bi-Up-Ex-M", "Nb-Up-Ex-Nm", "Bi-Dn-Ex-M", "Nb-Dn-Ex-Nm"}) {
    Model m(tiny_config(), ModelScheme::parse(name), 12);
    for (int i = 0; i < 50; ++i) {
      auto e = random_doc(rng, m, 3, 10);
      for (size_t c = 0; c < e.compositions.size(); ++c) {
        CHECK(e.composed_at[static_cast<size_t>(e.compositions[c].position)] == static_cast<int>(c));
        for (const auto& ch : e.compositions[c].children) {
          if (ch.composed) {
            CHECK(ch.index < static_cast<int>(c));
            CHECK(e.compositions[static_cast<size_t>(ch.index)].position < e.compositions[c].position);
          }
        }
      }
    }
  }
}

TEST_CASE("targets skip composition rows and the last row") {
  WordVocabulary v;
  auto scheme = ModelScheme::parse("Bi-Up-In-M");
  Tree t = parse_bracketed("( a b )", v);
  Model m(tiny_config(), scheme, v.size());
  auto e = encode(document_stream({sentence_actions(t, scheme)}, scheme), scheme, m.outputs());
  // <bos> a b ) )' <end>
  CHECK(e.targets == std::vector<int>{v.lookup("a"), v.lookup("b"), m.outputs().close, -1, m.outputs().end, -1});
  CHECK(e.prediction_rows() == 4);
}

TEST_CASE("pointer rows for non-binary bottom-up") {
  WordVocabulary v;
  auto scheme = ModelScheme::parse("Nb-Up-Ex-M");
  Tree t = parse_bracketed("( Write ( an essay ) quickly )", v);
  Model m(tiny_config(), scheme, v.size());
  auto e = encode(document_stream({sentence_actions(t, scheme)}, scheme), scheme, m.outputs());
  REQUIRE(e.pointer_rows.size() == 2);
  CHECK(e.pointer_rows[0].query == 3);
  CHECK(e.pointer_rows[0].candidates == std::vector<int>{1, 2, 3});
  CHECK(e.pointer_rows[0].gold == 1);
  CHECK(e.pointer_rows[1].query == 5);
  CHECK(e.pointer_rows[1].candidates == std::vector<int>{1, 4, 5});
  CHECK(e.pointer_rows[1].gold == 0);

  auto narrow = scheme;
  narrow.width1_starts = false;
  auto e2 = encode(document_stream({sentence_actions(t, narrow)}, narrow), narrow, m.outputs());
  CHECK(e2.pointer_rows[0].candidates == std::vector<int>{1, 2});
}

TEST_CASE("pointer distribution") {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> d(0.0, 1.0);
  const int w = 6;
  for (int trial = 0; trial < 100; ++trial) {
    ad::Mat theta(w, w);
    for (long i = 0; i < theta.size(); ++i) theta.data()[i] = d(rng);
    std::vector<ad::Row> reps(8, ad::Row(w));
    for (auto& r : reps) {
      for (long i = 0; i < w; ++i) r(i) = d(rng);
    }
    ad::Row query(w);
    for (long i = 0; i < w; ++i) query(i) = d(rng);
    std::vector<int> feasible;
    for (int i = 0; i < 8; ++i) {
      if (std::bernoulli_distribution(0.5)(rng)) feasible.push_back(i);
    }
    if (feasible.empty()) feasible.push_back(3);
    auto got = pointer_distribution(query, theta, reps, feasible);
    std::vector<std::vector<double>> th(w, std::vector<double>(w));
    std::vector<std::vector<double>> rv;
    for (int a = 0; a < w; ++a) {
      for (int b = 0; b < w; ++b) th[a][b] = theta(a, b);
    }
    for (const auto& r : reps) rv.emplace_back(r.data(), r.data() + w);
    auto want = testing::naive_pointer(std::vector<double>(query.data(), query.data() + w), th, rv, feasible);
    double total = 0.0;
    for (int i = 0; i < 8; ++i) {
      CHECK(std::abs(got[i] - want[i]) < 1e-12);
      const bool in = std::find(feasible.begin(), feasible.end(), i) != feasible.end();
      if (!in) CHECK(got[i] == 0.0);
      if (in) CHECK(got[i] > 0.0);
      total += got[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
    auto uniform = pointer_distribution(query, ad::Mat::Zero(w, w), reps, feasible);
    for (int p : feasible) CHECK(std::abs(uniform[p] - 1.0 / feasible.size()) < 1e-15);
  }
  ad::Row q = ad::Row::Ones(2);
  auto single = pointer_distribution(q, ad::Mat::Identity(2, 2), {q, q}, {1});
  CHECK(single[1] == 1.0);
  CHECK_THROWS_AS(pointer_distribution(q, ad::Mat::Identity(2, 2), {q}, {}), ConfigError);
  CHECK(joint_close_probability(0.5, 0.5) == 0.25);
  CHECK(joint_close_probability(0.3, 1.0) == 0.3);
}

TEST_CASE("composition function") {
  Model m(tiny_config(), ModelScheme::parse("Bi-Up-Ex-M"), 10);
  testing::scramble(m, 3);
  ad::Row a = ad::Row::LinSpaced(8, -1.0, 1.0);
  ad::Row b = ad::Row::LinSpaced(8, 0.5, -0.3);
  ad::Row ab = m.compose_external({a, b});
  CHECK(ab.size() == 16);
  CHECK((ab - m.compose_external({b, a})).norm() > 1e-6);
  CHECK(ab == m.compose_external({a, b}));
  CHECK_THROWS_AS(m.compose_external({}), ConfigError);
  CHECK_THROWS_AS(m.compose_external({ad::Row::Zero(5)}), ConfigError);
}

TEST_CASE("untrained loss is near the uniform entropy and batch-mean invariant") {
  std::mt19937_64 rng(47);
  for (const char* name : {"Nb-Dn-In-M", "Bi-Up-Ex-Nm", "token-lm"}) {
    ModelConfig c = tiny_config();
    Model m(c, ModelScheme::parse(name), 30);
    std::vector<EncodedSequence> batch{random_doc(rng, m, 4, 8), random_doc(rng, m, 4, 8)};
    const double l = m.loss_value(batch);
    CHECK(std::abs(l - std::log(static_cast<double>(m.outputs().size))) < 0.05);
    auto doubled = batch;
    doubled.insert(doubled.end(), batch.begin(), batch.end());
    CHECK(std::abs(m.loss_value(doubled) - l) < 1e-12);
  }
}

TEST_CASE("log_prob telescopes over action and start predictions") {
  std::mt19937_64 rng(53);
  Model m(tiny_config(), ModelScheme::parse("Nb-Up-In-Nm"), 12);
  testing::scramble(m, 7, 0.2);
  auto e = random_doc(rng, m, 2, 6);
  ad::Tape tape;
  auto f = m.forward(tape, e);
  const ad::Mat& logits = f.logits.value();
  double direct = 0.0;
  for (int q = 0; q < e.length(); ++q) {
    const int y = e.targets[q];
    if (y < 0) continue;
    direct += logits(q, y) - ad::log_sum_exp(logits.row(q));
  }
  const ad::Mat& h = f.pointer.value();
  for (const auto& pr : e.pointer_rows) {
    std::vector<ad::Row> reps;
    for (long i = 0; i < h.rows(); ++i) reps.push_back(h.row(i));
    auto dist = pointer_distribution(h.row(pr.query), m.param("pointer.theta").value, reps, pr.candidates);
    direct += std::log(dist[pr.candidates[pr.gold]]);
  }
  CHECK(std::abs(direct - m.log_prob(e)) < 1e-10);
}

TEST_CASE("backprop matches finite differences") {
  std::mt19937_64 rng(59);
  for (const char* name : {"Nb-Up-In-M", "Nb-Up-In-Nm", "Nb-Up-Ex-M", "Bi-Dn-Ex-Nm"}) {
    Model m(tiny_config(), ModelScheme::parse(name), 9);
    testing::scramble(m, 11);
    std::vector<EncodedSequence> batch{random_doc(rng, m, 2, 5)};
    auto r = testing::gradient_check(m, batch, 3, 13);
    MESSAGE(std::string(name) << " checked " << r.checked << " max rel " << r.max_rel << " at " << r.worst);
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("masked inputs cannot reach rows that do not see them") {
  std::mt19937_64 rng(61);
  for (int layers : {1, 2}) {
    for (const auto& v : VariantConfig::all()) {
      ModelConfig c = tiny_config();
      c.n_layers = layers;
      Model m(c, ModelScheme::from_variant(v), 9);
      testing::scramble(m, 17, 0.2);
      auto e = random_doc(rng, m, 2, 6);
      const int n = e.length();
      ad::Allowed reach = testing::reachability(*e.allowed, layers);
      ad::Tape base_tape;
      auto base = m.forward(base_tape, e);
      for (int k = 1; k < n; ++k) {
        ad::Mat delta = ad::Mat::Zero(n, c.d_model);
        for (int j = 0; j < c.d_model; ++j) delta(k, j) = std::normal_distribution<double>(0.0, 1.0)(rng);
        ForwardOptions opts;
        opts.input_delta = &delta;
        ad::Tape tape;
        auto out = m.forward(tape, e, opts);
        for (int q = 0; q < n; ++q) {
          const double diff = (out.logits.value().row(q) - base.logits.value().row(q)).cwiseAbs().maxCoeff();
          if (!reach(q, k)) {
            CHECK(diff <= 1e-12);
            if (layers == 1) CHECK_FALSE((*e.allowed)(q, k));
          } else if (q == k) {
            CHECK(diff > 0.0);
          }
        }
      }
    }
  }
}
