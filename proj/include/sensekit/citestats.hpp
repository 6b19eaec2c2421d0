#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <string_view>

#include "sensekit/textproc.hpp"

namespace sensekit::cite {

struct CitationProfile {
  std::size_t total_mentions = 0;
  std::set<std::string> unique_ids;
};

/// Marker ids are already upper-cased by parse_citations, so profiles compare
/// case-insensitively.
inline CitationProfile profile_from_text(std::string_view text) {
  CitationProfile profile;
  for (auto& mention : text::parse_citations(text)) {
    ++profile.total_mentions;
    profile.unique_ids.insert(mention.marker_id);
  }
  return profile;
}

struct CountDiff {
  std::size_t total_diff = 0;
  std::size_t unique_diff = 0;
};

inline CountDiff citation_l1_counts(const CitationProfile& t,
                                    const CitationProfile& s) {
  auto absdiff = [](std::size_t a, std::size_t b) { return a > b ? a - b : b - a; };
  return {absdiff(t.total_mentions, s.total_mentions),
          absdiff(t.unique_ids.size(), s.unique_ids.size())};
}

/// 1 - |t∩s| / |t∪s|, computed as (|∪|-|∩|)/|∪| so small fractions are exact.
/// Two empty sets are identical, hence distance 0 by convention.
inline double jaccard_distance(const std::set<std::string>& t,
                               const std::set<std::string>& s) {
  if (t.empty() && s.empty()) return 0.0;
  std::size_t inter = 0;
  auto it = t.begin(), is = s.begin();
  while (it != t.end() && is != s.end()) {
    if (*it < *is) ++it;
    else if (*is < *it) ++is;
    else { ++inter; ++it; ++is; }
  }
  const std::size_t uni = t.size() + s.size() - inter;
  return static_cast<double>(uni - inter) / static_cast<double>(uni);
}

}  // namespace sensekit::cite
