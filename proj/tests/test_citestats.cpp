#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sensekit/citestats.hpp"

using namespace sensekit;

TEST_CASE("citation profiles from text") {
  auto p = cite::profile_from_text("see [[R1]], then [[r1]] and [[R2]]");
  CHECK(p.total_mentions == 3);
  CHECK(p.unique_ids == std::set<std::string>{"R1", "R2"});
}

TEST_CASE("citation count L1 differences") {
  cite::CitationProfile a{3, {"R1", "R2"}};
  cite::CitationProfile b{3, {"R1", "R2"}};
  SECTION("identical profiles") {
    auto d = cite::citation_l1_counts(a, b);
    CHECK(d.total_diff == 0);
    CHECK(d.unique_diff == 0);
  }
  SECTION("totals 36 vs 29 differ by 7") {
    cite::CitationProfile t{36, {}};
    cite::CitationProfile s{29, {}};
    CHECK(cite::citation_l1_counts(t, s).total_diff == 7);
  }
  SECTION("empty vs three mentions of two ids") {
    cite::CitationProfile empty{};
    auto p = cite::profile_from_text("[[R1]] [[R1]] [[R2]]");
    auto d = cite::citation_l1_counts(empty, p);
    CHECK(d.total_diff == 3);
    CHECK(d.unique_diff == 2);
  }
  SECTION("symmetric in its arguments") {
    cite::CitationProfile t{5, {"R1"}};
    cite::CitationProfile s{9, {"R1", "R2", "R3"}};
    auto d1 = cite::citation_l1_counts(t, s);
    auto d2 = cite::citation_l1_counts(s, t);
    CHECK(d1.total_diff == d2.total_diff);
    CHECK(d1.unique_diff == d2.unique_diff);
  }
}

TEST_CASE("jaccard distance") {
  using Set = std::set<std::string>;
  CHECK(cite::jaccard_distance(Set{"R1", "R2"}, Set{"R1", "R2"}) == 0.0);
  CHECK(cite::jaccard_distance(Set{"R1"}, Set{"R2"}) == 1.0);
  CHECK(cite::jaccard_distance(Set{"R1", "R2"}, Set{"R2", "R3"}) == 2.0 / 3.0);
  CHECK(cite::jaccard_distance(Set{}, Set{}) == 0.0);  // documented convention
  CHECK(cite::jaccard_distance(Set{}, Set{"R1"}) == 1.0);

  std::mt19937 rng(31);
  auto random_set = [&]() {
    Set s;
    const int size = static_cast<int>(rng() % 8);
    for (int i = 0; i < size; ++i) s.insert("R" + std::to_string(rng() % 12));
    return s;
  };
  SECTION("symmetry and range") {
    for (int trial = 0; trial < 500; ++trial) {
      auto a = random_set(), b = random_set();
      const double d = cite::jaccard_distance(a, b);
      CHECK(d == cite::jaccard_distance(b, a));
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
      if (!a.empty() && a == b) CHECK(d == 0.0);
    }
  }
  SECTION("zero iff equal for non-empty sets") {
    for (int trial = 0; trial < 200; ++trial) {
      auto a = random_set(), b = random_set();
      if (a.empty() || b.empty()) continue;
      if (cite::jaccard_distance(a, b) == 0.0) CHECK(a == b);
    }
  }
  SECTION("triangle inequality on random triples") {
    for (int trial = 0; trial < 500; ++trial) {
      auto a = random_set(), b = random_set(), c = random_set();
      const double ab = cite::jaccard_distance(a, b);
      const double bc = cite::jaccard_distance(b, c);
      const double ac = cite::jaccard_distance(a, c);
      CHECK(ac <= ab + bc + 1e-12);
    }
  }
}
