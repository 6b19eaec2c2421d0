#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>

#include "sensekit/diversity.hpp"
#include "oracles.hpp"

using namespace sensekit;
using diversity::GenerationBundle;

namespace {

// Embedder scripted by exact text match.
diversity::EmbedFn scripted_embedder(std::map<std::string, std::vector<double>> table) {
  return [table = std::move(table)](const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) out.push_back(table.at(t));
    return out;
  };
}

// Deterministic hash embedder (any text).
diversity::EmbedFn hash_embedder(std::size_t dims = 8) {
  return [dims](const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) {
      const std::uint64_t seed = fnv1a64(t);
      std::vector<double> v(dims);
      for (std::size_t d = 0; d < dims; ++d) {
        v[d] = static_cast<double>(splitmix64(seed + d) >> 11) *
                   (1.0 / 9007199254740992.0) * 2.0 - 1.0;
      }
      out.push_back(std::move(v));
    }
    return out;
  };
}

GenerationBundle bundle_of(std::vector<std::string> texts,
                           diversity::Condition cond = diversity::Condition::None) {
  GenerationBundle b;
  b.prompt_id = "p";
  b.texts = std::move(texts);
  b.condition = cond;
  return b;
}

std::string random_text(std::mt19937& rng, int min_words = 8, int max_words = 40) {
  std::ostringstream out;
  const int words = min_words + static_cast<int>(rng() % (max_words - min_words + 1));
  for (int w = 0; w < words; ++w) {
    out << "tok" << rng() % 30;
    out << ((rng() % 6 == 0) ? ". " : " ");
  }
  return out.str();
}

}  // namespace

TEST_CASE("bleu4") {
  SECTION("identical hypothesis and reference score exactly 1") {
    CHECK(diversity::bleu4("a b c d e", {"a b c d e"}) == 1.0);
    CHECK(diversity::bleu4("a", {"a"}) == 1.0);       // effective orders < 4
    CHECK(diversity::bleu4("x y", {"x y"}) == 1.0);
  }
  SECTION("zero overlap is smoothed but tiny") {
    const double v = diversity::bleu4("a b c d", {"w x y z"});
    CHECK(v >= 0.0);
    CHECK(v < 1e-6);
  }
  SECTION("hand-computed clipped precision case") {
    // p1=4/5, p2=3/4, p3=2/3, p4=1/2, lengths equal so BP=1.
    const double expected = std::pow(0.8 * 0.75 * (2.0 / 3.0) * 0.5, 0.25);
    CHECK(diversity::bleu4("a b c d e", {"a b c d f"}) ==
          Catch::Approx(expected).margin(1e-12));
  }
  SECTION("empty hypothesis scores 0") {
    CHECK(diversity::bleu4("", {"a b"}) == 0.0);
  }
  SECTION("empty reference list is an error") {
    CHECK_THROWS_AS(diversity::bleu4("a", {}), ArgumentError);
  }
  SECTION("matches the naive oracle on random fixtures") {
    std::mt19937 rng(211);
    for (int trial = 0; trial < 100; ++trial) {
      auto text_of = [&](int len) {
        std::ostringstream out;
        for (int i = 0; i < len; ++i) out << "t" << rng() % 8 << ' ';
        return out.str();
      };
      const std::string hyp = text_of(1 + static_cast<int>(rng() % 12));
      std::vector<std::string> refs;
      const int nrefs = 1 + static_cast<int>(rng() % 4);
      for (int r = 0; r < nrefs; ++r) refs.push_back(text_of(1 + static_cast<int>(rng() % 12)));
      CHECK(diversity::bleu4(hyp, refs) ==
            Catch::Approx(oracles::naive_bleu4(hyp, refs)).margin(1e-6));
    }
  }
}

TEST_CASE("self-BLEU over bundles") {
  SECTION("five identical texts") {
    CHECK(diversity::self_bleu_bundle(bundle_of(
              {"a b c", "a b c", "a b c", "a b c", "a b c"})) == 1.0);
  }
  SECTION("pairwise disjoint vocabulary") {
    const double v = diversity::self_bleu_bundle(bundle_of(
        {"a1 a2 a3", "b1 b2 b3", "c1 c2 c3", "d1 d2 d3", "e1 e2 e3"}));
    CHECK(v < 1e-6);
  }
  SECTION("three crafted texts equal the mean of three bleu4 calls") {
    const std::vector<std::string> texts = {"a b c d", "a b c e", "a b x y"};
    double expected = 0.0;
    expected += oracles::naive_bleu4(texts[0], {texts[1], texts[2]});
    expected += oracles::naive_bleu4(texts[1], {texts[0], texts[2]});
    expected += oracles::naive_bleu4(texts[2], {texts[0], texts[1]});
    expected /= 3.0;
    CHECK(diversity::self_bleu_bundle(bundle_of(texts)) ==
          Catch::Approx(expected).margin(1e-9));
  }
  SECTION("k < 2 is an error") {
    CHECK_THROWS_AS(diversity::self_bleu_bundle(bundle_of({"only"})), ArgumentError);
  }
}

TEST_CASE("document embedding") {
  SECTION("single chunk returns the normalized chunk embedding") {
    auto embed = scripted_embedder({{"hello world", {3.0, 4.0}}});
    auto v = diversity::embed_document(embed, "hello world", 64);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == Catch::Approx(0.6).margin(1e-12));
    CHECK(v[1] == Catch::Approx(0.8).margin(1e-12));
  }
  SECTION("opposite chunk embeddings pool to zero and error") {
    auto embed = scripted_embedder({{"aa bb.", {1.0, 0.0}}, {"cc dd.", {-1.0, 0.0}}});
    CHECK_THROWS_AS(diversity::embed_document(embed, "aa bb. cc dd.", 2),
                    DegenerateInputError);
  }
  SECTION("orthogonal chunks pool to the diagonal") {
    auto embed = scripted_embedder({{"aa bb.", {1.0, 0.0}}, {"cc dd.", {0.0, 1.0}}});
    auto v = diversity::embed_document(embed, "aa bb. cc dd.", 2);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-12));
    CHECK(v[1] == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-12));
  }
  SECTION("empty text is an error") {
    CHECK_THROWS_AS(diversity::embed_document(hash_embedder(), "", 8), ArgumentError);
  }
}

TEST_CASE("embedding bundle similarity") {
  SECTION("identical texts give exactly 1") {
    auto b = bundle_of({"same text", "same text", "same text"});
    CHECK(diversity::embedding_bundle_similarity(b, hash_embedder(), 64) == 1.0);
  }
  SECTION("pairwise orthogonal embeddings give 0") {
    auto embed = scripted_embedder({{"t1", {1.0, 0.0, 0.0}},
                                    {"t2", {0.0, 1.0, 0.0}},
                                    {"t3", {0.0, 0.0, 1.0}}});
    CHECK(diversity::embedding_bundle_similarity(bundle_of({"t1", "t2", "t3"}),
                                                 embed, 64) == 0.0);
  }
  SECTION("three stub vectors at known angles") {
    auto embed = scripted_embedder({{"t1", {1.0, 0.0}},
                                    {"t2", {0.0, 1.0}},
                                    {"t3", {1.0, 1.0}}});
    // cos(t1,t2)=0, cos(t1,t3)=cos(t2,t3)=1/sqrt(2).
    const double expected = (0.0 + 2.0 / std::sqrt(2.0)) / 3.0;
    CHECK(diversity::embedding_bundle_similarity(bundle_of({"t1", "t2", "t3"}),
                                                 embed, 64) ==
          Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("directional chunk similarity") {
  SECTION("1x1 matrix returns its entry") {
    CHECK(diversity::directional_chunk_similarity({0.42}, 1, 1, {2.0}) ==
          Catch::Approx(0.42).margin(1e-15));
  }
  SECTION("constant matrix returns the constant for any weights") {
    CHECK(diversity::directional_chunk_similarity({0.3, 0.3, 0.3, 0.3, 0.3, 0.3},
                                                  2, 3, {1.0, 5.0}) ==
          Catch::Approx(0.3).margin(1e-15));
  }
  SECTION("row-max weighted mean by hand") {
    // S = [[0.2, 0.9], [0.5, 0.1]], w = [1, 3]: (0.9 + 3*0.5)/4 = 0.6.
    CHECK(diversity::directional_chunk_similarity({0.2, 0.9, 0.5, 0.1}, 2, 2,
                                                  {1.0, 3.0}) ==
          Catch::Approx(0.6).margin(1e-15));
  }
  SECTION("all-zero weights are an error") {
    CHECK_THROWS_AS(
        diversity::directional_chunk_similarity({0.5}, 1, 1, {0.0}), ArgumentError);
  }
  SECTION("uniform weights equal the unweighted row-max mean") {
    std::mt19937 rng(401);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t m = 1 + rng() % 4, n = 1 + rng() % 4;
      std::vector<double> s(m * n);
      for (double& x : s) x = static_cast<double>(rng() % 1000) / 999.0;
      double plain = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        double mx = s[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, s[i * n + j]);
        plain += mx;
      }
      plain /= static_cast<double>(m);
      const double got = diversity::directional_chunk_similarity(
          s, m, n, std::vector<double>(m, 1.0));
      CHECK(got == Catch::Approx(plain).margin(1e-12));
      const double lo = *std::min_element(s.begin(), s.end());
      const double hi = *std::max_element(s.begin(), s.end());
      CHECK(got >= lo - 1e-12);
      CHECK(got <= hi + 1e-12);
    }
  }
}

TEST_CASE("symmetric chunk similarity") {
  auto cosine_backend = diversity::cosine_chunk_scorer(hash_embedder());

  SECTION("identical docs with a cosine scorer score exactly 1") {
    auto doc = text::chunk("alpha beta. gamma delta. epsilon zeta.", 2);
    CHECK(diversity::symmetric_chunk_similarity(doc, doc, cosine_backend) == 1.0);
  }
  SECTION("single chunks reduce to the single score") {
    auto x = text::chunk("a b", 16);
    auto y = text::chunk("c d", 16);
    diversity::ChunkScorer fixed = [](const std::vector<std::string>&,
                                      const std::vector<std::string>&) {
      return std::vector<double>{0.37};
    };
    CHECK(diversity::symmetric_chunk_similarity(x, y, fixed) ==
          Catch::Approx(0.37).margin(1e-15));
  }
  SECTION("2x2 fixture averages the two directional values") {
    auto x = text::chunk("one two three. four five.", 3);   // weights 3, 2
    auto y = text::chunk("a b. c d e f.", 4);               // weights 2, 4
    REQUIRE(x.size() == 2);
    REQUIRE(y.size() == 2);
    diversity::ChunkScorer fixed = [](const std::vector<std::string>& a,
                                      const std::vector<std::string>& b) {
      // S = [[0.9, 0.1], [0.2, 0.6]] when |a|=2; transposed otherwise.
      if (a.size() == 2 && b.size() == 2) return std::vector<double>{0.9, 0.1, 0.2, 0.6};
      return std::vector<double>{};
    };
    const double s_xy = (3.0 * 0.9 + 2.0 * 0.6) / 5.0;
    const double s_yx = (2.0 * 0.9 + 4.0 * 0.6) / 6.0;
    CHECK(diversity::symmetric_chunk_similarity(x, y, fixed) ==
          Catch::Approx(0.5 * (s_xy + s_yx)).margin(1e-12));
  }
  SECTION("empty documents are an error") {
    auto x = text::chunk("a", 4);
    CHECK_THROWS_AS(
        diversity::symmetric_chunk_similarity(x, text::ChunkedDoc{}, cosine_backend),
        ArgumentError);
  }
}

TEST_CASE("sentence movers similarity") {
  SECTION("identical documents score 1 within 1e-9") {
    auto doc = text::chunk("alpha beta gamma. delta epsilon. zeta eta theta.", 3);
    CHECK(diversity::sentence_movers_similarity(doc, doc, hash_embedder()) ==
          Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("orthogonal single chunks score 0") {
    auto embed = scripted_embedder({{"a b", {1.0, 0.0}}, {"c d", {0.0, 1.0}}});
    auto x = text::chunk("a b", 16);
    auto y = text::chunk("c d", 16);
    CHECK(diversity::sentence_movers_similarity(x, y, embed) ==
          Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("2-chunk fixture equals 1 minus the hand-solved transport cost") {
    auto embed = scripted_embedder({{"w1 w2.", {1.0, 0.0}},
                                    {"w3 w4 w5 w6.", {0.0, 1.0}},
                                    {"v1 v2 v3.", {1.0, 1.0}},
                                    {"v4 v5 v6.", {1.0, -1.0}}});
    auto x = text::chunk("w1 w2. w3 w4 w5 w6.", 4);  // weights 1/3, 2/3
    auto y = text::chunk("v1 v2 v3. v4 v5 v6.", 3);  // weights 1/2, 1/2
    REQUIRE(x.size() == 2);
    REQUIRE(y.size() == 2);
    // Cost matrix via cosines: rows (1,0),(0,1) vs cols (1,1)/sqrt2,(1,-1)/sqrt2.
    const double c = 1.0 / std::sqrt(2.0);
    std::vector<double> cost = {1.0 - c, 1.0 - c, 1.0 - c, 1.0 + c};
    const double expected_cost = oracles::min_transport_cost(
        2, 2, cost, {1.0 / 3.0, 2.0 / 3.0}, {0.5, 0.5});
    CHECK(diversity::sentence_movers_similarity(x, y, embed) ==
          Catch::Approx(1.0 - expected_cost).margin(1e-9));
  }
}

TEST_CASE("diversity reports") {
  diversity::DiversityBackend backend;
  backend.embed = hash_embedder();
  backend.embed_context_budget = 32;
  backend.chunk_budget_tokens = 8;

  SECTION("identical-text bundles give zero diversity in every condition") {
    std::vector<GenerationBundle> bundles;
    for (auto cond : {diversity::Condition::Infer, diversity::Condition::Target}) {
      auto b = bundle_of({"same words here", "same words here", "same words here"}, cond);
      b.prompt_id = std::string("p-") + std::string(condition_name(cond));
      bundles.push_back(b);
    }
    for (auto metric : {diversity::Metric::SelfBleu, diversity::Metric::Embedding,
                        diversity::Metric::ChunkedScore,
                        diversity::Metric::SentenceMovers}) {
      auto report = diversity::diversity_report(bundles, metric, backend);
      for (const auto& [cond, d] : report.diversity)
        CHECK(d == Catch::Approx(0.0).margin(1e-9));
      CHECK(report.overall == Catch::Approx(0.0).margin(1e-9));
    }
  }
  SECTION("a single condition's diversity is the overall value") {
    std::vector<GenerationBundle> bundles{
        bundle_of({"alpha beta gamma", "delta epsilon zeta"},
                  diversity::Condition::Infer)};
    auto report =
        diversity::diversity_report(bundles, diversity::Metric::SelfBleu, backend);
    REQUIRE(report.diversity.size() == 1);
    CHECK(report.overall == report.diversity.begin()->second);
  }
  SECTION("hand-set bundle similarities 0.8 and 0.6 give D 0.2/0.4, overall 0.3") {
    auto embed = scripted_embedder({{"i1", {1.0, 0.0}},
                                    {"i2", {0.8, 0.6}},
                                    {"t1", {1.0, 0.0}},
                                    {"t2", {0.6, 0.8}}});
    diversity::DiversityBackend scripted;
    scripted.embed = embed;
    scripted.embed_context_budget = 64;
    std::vector<GenerationBundle> bundles{
        bundle_of({"i1", "i2"}, diversity::Condition::Infer),
        bundle_of({"t1", "t2"}, diversity::Condition::Target)};
    auto report =
        diversity::diversity_report(bundles, diversity::Metric::Embedding, scripted);
    CHECK(report.diversity.at(diversity::Condition::Infer) ==
          Catch::Approx(0.2).margin(1e-12));
    CHECK(report.diversity.at(diversity::Condition::Target) ==
          Catch::Approx(0.4).margin(1e-12));
    CHECK(report.overall == Catch::Approx(0.3).margin(1e-12));
  }
  SECTION("empty bundle list is an error") {
    CHECK_THROWS_AS(diversity::diversity_report({}, diversity::Metric::SelfBleu, backend),
                    ArgumentError);
  }
}

TEST_CASE("bundle metrics are exactly permutation-invariant") {
  std::mt19937 rng(601);
  diversity::DiversityBackend backend;
  backend.embed = hash_embedder();
  backend.embed_context_budget = 16;
  backend.chunk_budget_tokens = 8;

  for (int trial = 0; trial < 10; ++trial) {
    GenerationBundle base;
    base.prompt_id = "perm";
    for (int i = 0; i < 5; ++i) base.texts.push_back(random_text(rng));

    for (auto metric : {diversity::Metric::SelfBleu, diversity::Metric::Embedding,
                        diversity::Metric::ChunkedScore,
                        diversity::Metric::SentenceMovers}) {
      const double reference = diversity::bundle_similarity(base, metric, backend);
      for (int perm = 0; perm < 5; ++perm) {
        GenerationBundle shuffled = base;
        std::shuffle(shuffled.texts.begin(), shuffled.texts.end(), rng);
        CHECK(diversity::bundle_similarity(shuffled, metric, backend) == reference);
      }
    }
  }
}
