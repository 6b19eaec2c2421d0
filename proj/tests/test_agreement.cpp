#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sensekit/agreement.hpp"
#include "oracles.hpp"

using namespace sensekit;

namespace {

agreement::RatingMatrix matrix_from(const std::vector<std::vector<int>>& cells) {
  agreement::RatingMatrix m;
  for (std::size_t r = 0; r < cells.size(); ++r) m.raters.push_back("rater" + std::to_string(r));
  for (std::size_t i = 0; i < cells[0].size(); ++i) m.items.push_back("item" + std::to_string(i));
  m.cells.resize(cells.size());
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (int v : cells[r]) {
      if (v < 0) m.cells[r].push_back(std::nullopt);
      else m.cells[r].push_back(v);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("alpha is 1 under perfect agreement") {
  SECTION("all scores globally identical (degenerate, flagged)") {
    auto m = matrix_from({{3, 3, 3, 3, 3}, {3, 3, 3, 3, 3}});
    auto result = agreement::krippendorff_alpha(m);
    CHECK(result.alpha == 1.0);
    CHECK(result.zero_expected_disagreement);
  }
  SECTION("per-item agreement with varying items") {
    auto m = matrix_from({{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}});
    auto result = agreement::krippendorff_alpha(m);
    CHECK(result.alpha == 1.0);
    CHECK_FALSE(result.zero_expected_disagreement);
  }
}

TEST_CASE("alpha matches the pair-enumeration oracle") {
  SECTION("crafted 3x4 interval matrix") {
    std::vector<std::vector<int>> cells = {{1, 2, 3, 3}, {2, 2, 3, 4}, {1, 3, 3, 4}};
    auto result = agreement::krippendorff_alpha(matrix_from(cells),
                                                agreement::DistanceMetric::Interval);
    auto expected = oracles::pairwise_alpha(cells, oracles::AlphaMetric::Interval);
    REQUIRE(expected.has_value());
    CHECK(result.alpha == Catch::Approx(*expected).margin(1e-9));
  }
  SECTION("removing a cell equals the oracle without that value") {
    std::vector<std::vector<int>> cells = {{1, 2, 3, 3}, {2, 2, 3, 4}, {1, 3, -1, 4}};
    auto result = agreement::krippendorff_alpha(matrix_from(cells),
                                                agreement::DistanceMetric::Interval);
    auto expected = oracles::pairwise_alpha(cells, oracles::AlphaMetric::Interval);
    REQUIRE(expected.has_value());
    CHECK(result.alpha == Catch::Approx(*expected).margin(1e-9));
  }
  SECTION("random matrices across all three metrics") {
    std::mt19937 rng(37);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::vector<int>> cells(3, std::vector<int>(12));
      for (auto& row : cells)
        for (int& v : row) v = (rng() % 10 == 0) ? -1 : 1 + static_cast<int>(rng() % 5);
      const auto metric = static_cast<agreement::DistanceMetric>(trial % 3);
      const auto oracle_metric = static_cast<oracles::AlphaMetric>(trial % 3);
      auto expected = oracles::pairwise_alpha(cells, oracle_metric);
      if (!expected.has_value()) continue;
      auto result = agreement::krippendorff_alpha(matrix_from(cells), metric);
      CHECK(result.alpha == Catch::Approx(*expected).margin(1e-9));
      CHECK(result.alpha <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("alpha invariances") {
  std::vector<std::vector<int>> cells = {{1, 2, 4, 3, 2}, {2, 2, 4, 4, 1}, {1, 3, 5, 3, 2}};
  const double base =
      agreement::krippendorff_alpha(matrix_from(cells)).alpha;

  SECTION("rater relabeling and item permutation") {
    std::vector<std::vector<int>> permuted(3, std::vector<int>(5));
    const std::vector<std::size_t> item_order = {4, 2, 0, 3, 1};
    const std::vector<std::size_t> rater_order = {2, 0, 1};
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t i = 0; i < 5; ++i)
        permuted[r][i] = cells[rater_order[r]][item_order[i]];
    CHECK(agreement::krippendorff_alpha(matrix_from(permuted)).alpha ==
          Catch::Approx(base).margin(1e-12));
  }
  SECTION("interval metric ignores a constant shift") {
    // Shift scores 1..4 up by one (stays within the 1..5 domain).
    std::vector<std::vector<int>> small = {{1, 2, 3, 2}, {2, 1, 3, 3}, {1, 2, 4, 2}};
    std::vector<std::vector<int>> up = small;
    for (auto& row : up)
      for (int& v : row) ++v;
    const double a = agreement::krippendorff_alpha(
                         matrix_from(small), agreement::DistanceMetric::Interval).alpha;
    const double b = agreement::krippendorff_alpha(
                         matrix_from(up), agreement::DistanceMetric::Interval).alpha;
    CHECK(a == Catch::Approx(b).margin(1e-12));
  }
}

TEST_CASE("alpha input validation") {
  SECTION("scores outside 1..5 are rejected") {
    auto m = matrix_from({{1, 2}, {6, 2}});
    CHECK_THROWS_AS(agreement::krippendorff_alpha(m), ArgumentError);
  }
  SECTION("insufficient pairable data is an error") {
    // Only one item has two ratings.
    auto m = matrix_from({{1, -1, -1}, {2, 3, -1}});
    CHECK_THROWS_AS(agreement::krippendorff_alpha(m), ArgumentError);
  }
}
