#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sensekit/errors.hpp"
#include "sensekit/hash.hpp"
#include "sensekit/textproc.hpp"

namespace sensekit::corpus {

// ---------------------------------------------------------------------------
// Records and loading. The corpus is line-delimited JSON with fields
// {paper_id, title, abstract, body, cited_ids, metadata}.
// ---------------------------------------------------------------------------

struct PaperRecord {
  std::string paper_id;
  std::string title;
  std::string abstract_text;
  std::string body;
  std::vector<std::string> cited_ids;  // deduplicated, never self-referential
  std::map<std::string, std::string> metadata;
};

struct SkippedLine {
  std::size_t line_number = 0;  // 1-based
  std::string reason;
};

struct LoadResult {
  std::vector<PaperRecord> records;
  std::vector<SkippedLine> skipped;
};

namespace detail {

inline PaperRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("record is not an object");
  PaperRecord rec;
  if (!j.contains("paper_id") || !j["paper_id"].is_string())
    throw ParseError("missing string field 'paper_id'");
  rec.paper_id = j["paper_id"].get<std::string>();
  if (rec.paper_id.empty()) throw ParseError("empty 'paper_id'");
  auto read_string = [&](const char* key, std::string& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_string()) throw ParseError(std::string("field '") + key + "' is not a string");
    out = j[key].get<std::string>();
  };
  read_string("title", rec.title);
  read_string("abstract", rec.abstract_text);
  read_string("body", rec.body);
  if (j.contains("cited_ids")) {
    if (!j["cited_ids"].is_array()) throw ParseError("field 'cited_ids' is not an array");
    std::set<std::string> seen;
    for (const auto& c : j["cited_ids"]) {
      if (!c.is_string()) throw ParseError("cited_ids entry is not a string");
      std::string id = c.get<std::string>();
      // Keep cited_ids an ordered set that never contains the paper itself.
      if (id == rec.paper_id || !seen.insert(id).second) continue;
      rec.cited_ids.push_back(std::move(id));
    }
  }
  if (j.contains("metadata")) {
    if (!j["metadata"].is_object()) throw ParseError("field 'metadata' is not an object");
    for (auto it = j["metadata"].begin(); it != j["metadata"].end(); ++it) {
      if (!it.value().is_string()) throw ParseError("metadata values must be strings");
      rec.metadata[it.key()] = it.value().get<std::string>();
    }
  }
  return rec;
}

}  // namespace detail

/// Streams records in file order. Malformed lines are reported to skip_cb
/// (with their 1-based line number) and never silently dropped.
inline void for_each_record(
    const std::filesystem::path& path,
    const std::function<void(PaperRecord&&)>& sink,
    const std::function<void(const SkippedLine&)>& skip_cb = {},
    std::optional<std::size_t> limit = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path.string());
  std::string line;
  std::size_t line_number = 0;
  std::size_t yielded = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (limit && yielded >= *limit) break;
    if (line.empty()) continue;
    try {
      sink(detail::record_from_json(nlohmann::json::parse(line)));
      ++yielded;
    } catch (const nlohmann::json::exception& e) {
      if (skip_cb) skip_cb({line_number, e.what()});
    } catch (const ParseError& e) {
      if (skip_cb) skip_cb({line_number, e.what()});
    }
  }
}

inline LoadResult load_corpus(const std::filesystem::path& path,
                              std::optional<std::size_t> limit = std::nullopt) {
  LoadResult result;
  for_each_record(
      path, [&](PaperRecord&& rec) { result.records.push_back(std::move(rec)); },
      [&](const SkippedLine& s) { result.skipped.push_back(s); }, limit);
  return result;
}

// ---------------------------------------------------------------------------
// Index and citation neighborhoods.
// ---------------------------------------------------------------------------

class CorpusIndex {
 public:
  explicit CorpusIndex(std::vector<PaperRecord> records) {
    for (auto& rec : records) {
      auto [it, inserted] = by_id_.emplace(rec.paper_id, std::move(rec));
      if (inserted) {
        order_.push_back(it->first);
      } else {
        duplicates_.push_back(it->first);  // first occurrence wins
      }
    }
  }

  const std::vector<std::string>& ids() const { return order_; }
  const std::vector<std::string>& duplicates() const { return duplicates_; }
  std::size_t size() const { return order_.size(); }

  const PaperRecord* find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &it->second;
  }

  const PaperRecord& at(const std::string& id) const {
    const PaperRecord* rec = find(id);
    if (!rec) throw NotFoundError("paper not in corpus: " + id);
    return *rec;
  }

 private:
  std::vector<std::string> order_;  // first-occurrence file order
  std::vector<std::string> duplicates_;
  std::unordered_map<std::string, PaperRecord> by_id_;
};

struct CitationNeighborhood {
  std::string target_id;
  std::vector<PaperRecord> cited;    // resolvable records, in cited_ids order
  std::vector<std::string> missing;  // cited_ids absent from the corpus

  std::size_t size() const { return cited.size(); }
};

inline CitationNeighborhood build_neighborhood(const CorpusIndex& index,
                                               const std::string& target_id) {
  const PaperRecord& target = index.at(target_id);
  CitationNeighborhood hood;
  hood.target_id = target_id;
  for (const auto& cited_id : target.cited_ids) {
    if (const PaperRecord* rec = index.find(cited_id)) {
      hood.cited.push_back(*rec);
    } else {
      hood.missing.push_back(cited_id);
    }
  }
  return hood;
}

// ---------------------------------------------------------------------------
// Split assignment.
// ---------------------------------------------------------------------------

enum class Split { Train, Validation, Test };
enum class Mode { Target, Infer };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

inline std::string_view mode_name(Mode m) {
  return m == Mode::Target ? "target" : "infer";
}

struct SplitRatios {
  double train = 0.0;
  double validation = 0.0;
  double test = 0.0;
};

struct SplitAssignment {
  std::string paper_id;
  Split split;
  Mode mode;
};

/// Deterministic split assignment. Ids are ordered by hash(paper_id, seed)
/// rather than input order, so the partition survives corpus re-shuffles.
/// Validation and test sizes are floor(n * ratio); the remainder goes to
/// train.
inline std::vector<SplitAssignment> assign_splits(std::vector<std::string> ids,
                                                  const SplitRatios& ratios,
                                                  std::uint64_t seed,
                                                  Mode mode = Mode::Target) {
  if (!(ratios.train > 0.0) || !(ratios.validation > 0.0) || !(ratios.test > 0.0))
    throw ArgumentError("assign_splits: ratios must be positive");
  const double sum = ratios.train + ratios.validation + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ArgumentError("assign_splits: ratios must sum to 1");
  if (ids.empty()) return {};

  const std::uint64_t seed_mix = splitmix64(seed);
  std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    const std::uint64_t ha = splitmix64(fnv1a64(a) ^ seed_mix);
    const std::uint64_t hb = splitmix64(fnv1a64(b) ^ seed_mix);
    if (ha != hb) return ha < hb;
    return a < b;
  });

  const std::size_t n = ids.size();
  const auto n_val = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * ratios.validation));
  const auto n_test = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * ratios.test));
  const std::size_t n_train = n - n_val - n_test;

  std::vector<SplitAssignment> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Split split = Split::Train;
    if (i >= n_train && i < n_train + n_val) split = Split::Validation;
    if (i >= n_train + n_val) split = Split::Test;
    out.push_back({std::move(ids[i]), split, mode});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset statistics (split/mode counts, mean trajectory length in tokens,
// mean unique cited markers per trajectory, mean citation-neighborhood size).
// ---------------------------------------------------------------------------

struct DatasetRow {
  std::string paper_id;
  Split split = Split::Train;
  Mode mode = Mode::Target;
  std::string trajectory;
  std::size_t neighborhood_size = 0;
};

struct StatAverages {
  double avg_length_tokens = 0.0;
  double avg_cited_refs = 0.0;
  double avg_citation_neighborhood = 0.0;
};

struct CorpusStats {
  std::array<std::array<std::size_t, 2>, 3> counts{};  // [split][mode]
  std::array<StatAverages, 2> per_mode{};              // [mode]
  StatAverages total{};
  std::size_t record_count = 0;
};

inline CorpusStats compute_stats(const std::vector<DatasetRow>& rows) {
  if (rows.empty()) throw ArgumentError("compute_stats: empty dataset");
  CorpusStats stats;
  stats.record_count = rows.size();
  // Integer accumulators keep the means exactly permutation-invariant.
  std::array<std::size_t, 2> mode_count{};
  std::array<unsigned long long, 2> tokens{}, refs{}, hood{};
  for (const auto& row : rows) {
    const auto s = static_cast<std::size_t>(row.split);
    const auto m = static_cast<std::size_t>(row.mode);
    ++stats.counts[s][m];
    ++mode_count[m];
    tokens[m] += text::token_count(row.trajectory);
    std::set<std::string> unique;
    for (const auto& mention : text::parse_citations(row.trajectory))
      unique.insert(mention.marker_id);
    refs[m] += unique.size();
    hood[m] += row.neighborhood_size;
  }
  unsigned long long t = 0, r = 0, h = 0;
  for (std::size_t m = 0; m < 2; ++m) {
    if (mode_count[m] > 0) {
      const auto c = static_cast<double>(mode_count[m]);
      stats.per_mode[m] = {static_cast<double>(tokens[m]) / c,
                           static_cast<double>(refs[m]) / c,
                           static_cast<double>(hood[m]) / c};
    }
    t += tokens[m];
    r += refs[m];
    h += hood[m];
  }
  const auto n = static_cast<double>(rows.size());
  stats.total = {static_cast<double>(t) / n, static_cast<double>(r) / n,
                 static_cast<double>(h) / n};
  return stats;
}

}  // namespace sensekit::corpus
