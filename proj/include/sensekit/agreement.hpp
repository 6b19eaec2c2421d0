#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sensekit/errors.hpp"

namespace sensekit::agreement {

enum class DistanceMetric { Nominal, Ordinal, Interval };

inline std::string_view metric_name(DistanceMetric m) {
  switch (m) {
    case DistanceMetric::Nominal: return "nominal";
    case DistanceMetric::Ordinal: return "ordinal";
    case DistanceMetric::Interval: return "interval";
  }
  return "interval";
}

/// Rater x item score matrix with missing cells. Scores are the 1-5 rubric
/// scale.
struct RatingMatrix {
  std::vector<std::string> raters;
  std::vector<std::string> items;
  // cells[r][i]: rating of item i by rater r, or nullopt when missing.
  std::vector<std::vector<std::optional<int>>> cells;

  void validate() const {
    if (cells.size() != raters.size())
      throw ArgumentError("rating matrix: row count does not match raters");
    for (const auto& row : cells) {
      if (row.size() != items.size())
        throw ArgumentError("rating matrix: column count does not match items");
      for (const auto& cell : row) {
        if (cell && (*cell < 1 || *cell > 5))
          throw ArgumentError("rating matrix: scores must be in 1..5");
      }
    }
  }
};

struct AlphaResult {
  double alpha = 0.0;
  // True when expected disagreement is zero (all pairable ratings identical);
  // alpha is 1 by convention and the flag is surfaced in reports.
  bool zero_expected_disagreement = false;
  DistanceMetric metric = DistanceMetric::Interval;
};

/// Krippendorff's alpha via the coincidence-matrix formulation. Items with
/// fewer than two ratings contribute nothing. The interval metric is the
/// default for the 1-5 rubric scale; ordinal and nominal are offered as
/// configuration and the choice is surfaced in every report.
inline AlphaResult krippendorff_alpha(
    const RatingMatrix& m, DistanceMetric metric = DistanceMetric::Interval) {
  m.validate();

  // Distinct values present, in increasing order.
  std::vector<int> values;
  for (const auto& row : m.cells)
    for (const auto& cell : row)
      if (cell) values.push_back(*cell);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const std::size_t v = values.size();
  std::map<int, std::size_t> value_index;
  for (std::size_t i = 0; i < v; ++i) value_index[values[i]] = i;

  // Coincidence matrix.
  std::vector<double> coincidence(v * v, 0.0);
  std::size_t pairable_units = 0;
  unsigned long long pairable_values = 0;
  for (std::size_t item = 0; item < m.items.size(); ++item) {
    std::vector<std::size_t> unit;
    for (std::size_t rater = 0; rater < m.raters.size(); ++rater)
      if (m.cells[rater][item]) unit.push_back(value_index[*m.cells[rater][item]]);
    if (unit.size() < 2) continue;
    ++pairable_units;
    pairable_values += unit.size();
    const double w = 1.0 / static_cast<double>(unit.size() - 1);
    for (std::size_t p = 0; p < unit.size(); ++p)
      for (std::size_t q = 0; q < unit.size(); ++q)
        if (p != q) coincidence[unit[p] * v + unit[q]] += w;
  }
  if (pairable_units < 2)
    throw ArgumentError("krippendorff_alpha: insufficient data "
                        "(need at least 2 items with >= 2 ratings)");

  std::vector<double> marginal(v, 0.0);
  for (std::size_t c = 0; c < v; ++c)
    for (std::size_t k = 0; k < v; ++k) marginal[c] += coincidence[c * v + k];
  const auto n = static_cast<double>(pairable_values);

  auto squared_distance = [&](std::size_t c, std::size_t k) -> double {
    if (c == k) return 0.0;
    switch (metric) {
      case DistanceMetric::Nominal:
        return 1.0;
      case DistanceMetric::Interval: {
        const double d = static_cast<double>(values[c] - values[k]);
        return d * d;
      }
      case DistanceMetric::Ordinal: {
        const std::size_t lo = std::min(c, k), hi = std::max(c, k);
        double cum = 0.0;
        for (std::size_t g = lo; g <= hi; ++g) cum += marginal[g];
        const double d = cum - (marginal[c] + marginal[k]) / 2.0;
        return d * d;
      }
    }
    return 0.0;
  };

  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < v; ++c) {
    for (std::size_t k = 0; k < v; ++k) {
      const double d2 = squared_distance(c, k);
      observed += coincidence[c * v + k] * d2;
      expected += marginal[c] * marginal[k] * d2;
    }
  }
  const double d_observed = observed / n;
  const double d_expected = expected / (n * (n - 1.0));

  AlphaResult result;
  result.metric = metric;
  if (d_expected == 0.0) {
    result.alpha = 1.0;
    result.zero_expected_disagreement = true;
    return result;
  }
  result.alpha = 1.0 - d_observed / d_expected;
  return result;
}

}  // namespace sensekit::agreement
