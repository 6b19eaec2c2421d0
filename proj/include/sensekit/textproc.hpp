#pragma once

#include <array>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "sensekit/errors.hpp"

namespace sensekit::text {

// ---------------------------------------------------------------------------
// Tokenization. The token unit everywhere in this library is a maximal run of
// non-whitespace characters; whitespace means Unicode whitespace decoded from
// UTF-8 (invalid bytes are treated as ordinary characters).
// ---------------------------------------------------------------------------

inline bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D:
    case 0x20: case 0x85: case 0xA0: case 0x1680:
    case 0x2000: case 0x2001: case 0x2002: case 0x2003: case 0x2004:
    case 0x2005: case 0x2006: case 0x2007: case 0x2008: case 0x2009:
    case 0x200A: case 0x2028: case 0x2029: case 0x202F: case 0x205F:
    case 0x3000:
      return true;
    default:
      return false;
  }
}

namespace detail {

// Decodes one UTF-8 codepoint at byte offset i; returns {codepoint, length}.
// Malformed sequences decode as the single raw byte.
inline std::pair<char32_t, std::size_t> decode_utf8(std::string_view s,
                                                    std::size_t i) {
  const unsigned char b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return {b0, 1};
  auto cont = [&](std::size_t k) {
    return i + k < s.size() &&
           (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    char32_t cp = (static_cast<char32_t>(b0 & 0x1F) << 6) |
                  (static_cast<unsigned char>(s[i + 1]) & 0x3F);
    return {cp, 2};
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    char32_t cp = (static_cast<char32_t>(b0 & 0x0F) << 12) |
                  ((static_cast<char32_t>(s[i + 1]) & 0x3F) << 6) |
                  (static_cast<unsigned char>(s[i + 2]) & 0x3F);
    return {cp, 3};
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    char32_t cp = (static_cast<char32_t>(b0 & 0x07) << 18) |
                  ((static_cast<char32_t>(s[i + 1]) & 0x3F) << 12) |
                  ((static_cast<char32_t>(s[i + 2]) & 0x3F) << 6) |
                  (static_cast<unsigned char>(s[i + 3]) & 0x3F);
    return {cp, 4};
  }
  return {b0, 1};
}

}  // namespace detail

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    auto [cp, len] = detail::decode_utf8(text, i);
    if (is_unicode_space(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.append(text.substr(i, len));
    }
    i += len;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::size_t token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  std::size_t i = 0;
  while (i < text.size()) {
    auto [cp, len] = detail::decode_utf8(text, i);
    if (is_unicode_space(cp)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
    i += len;
  }
  return count;
}

// ---------------------------------------------------------------------------
// Sentence chunking under a token budget.
// ---------------------------------------------------------------------------

struct Chunk {
  std::string text;
  std::size_t token_count = 0;
};

struct ChunkedDoc {
  std::vector<Chunk> chunks;
  std::vector<double> weights;  // token counts normalized to sum 1

  bool empty() const { return chunks.empty(); }
  std::size_t size() const { return chunks.size(); }
};

/// Sentences split on '.', '!', '?' and newline.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> sentences;
  std::string current;
  auto flush = [&]() {
    std::size_t b = 0, e = current.size();
    while (b < e && std::isspace(static_cast<unsigned char>(current[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(current[e - 1]))) --e;
    if (e > b) sentences.push_back(current.substr(b, e - b));
    current.clear();
  };
  for (char c : text) {
    current.push_back(c);
    if (c == '.' || c == '!' || c == '?' || c == '\n') flush();
  }
  flush();
  return sentences;
}

/// Greedy left-to-right packing of sentences into chunks of at most
/// budget_tokens tokens. A single sentence over the budget becomes its own
/// oversize chunk. Weights are chunk token counts normalized to sum 1.
inline ChunkedDoc chunk(std::string_view text, std::size_t budget_tokens) {
  if (budget_tokens < 1) throw ArgumentError("chunk: budget must be >= 1");
  ChunkedDoc doc;
  std::string current;
  std::size_t current_tokens = 0;
  auto flush = [&]() {
    if (current_tokens > 0) {
      doc.chunks.push_back({std::move(current), current_tokens});
      current.clear();
      current_tokens = 0;
    }
  };
  for (auto& sentence : split_sentences(text)) {
    const std::size_t n = token_count(sentence);
    if (n == 0) continue;
    if (n > budget_tokens) {
      flush();
      doc.chunks.push_back({std::move(sentence), n});
      continue;
    }
    if (current_tokens > 0 && current_tokens + n > budget_tokens) flush();
    if (!current.empty()) current.push_back(' ');
    current.append(sentence);
    current_tokens += n;
  }
  flush();

  std::size_t total = 0;
  for (auto& c : doc.chunks) total += c.token_count;
  doc.weights.reserve(doc.chunks.size());
  for (auto& c : doc.chunks) {
    doc.weights.push_back(static_cast<double>(c.token_count) /
                          static_cast<double>(total));
  }
  return doc;
}

// ---------------------------------------------------------------------------
// N-gram repetition.
// ---------------------------------------------------------------------------

struct NgramStats {
  std::size_t total = 0;
  std::size_t unique = 0;
};

inline NgramStats ngram_stats(std::string_view text, std::size_t n) {
  if (n < 1) throw ArgumentError("ngram_stats: n must be >= 1");
  const auto tokens = tokenize(text);
  NgramStats stats;
  if (tokens.size() < n) return stats;
  stats.total = tokens.size() - n + 1;
  std::unordered_set<std::string> seen;
  seen.reserve(stats.total);
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key.append(tokens[i + k]);
    }
    seen.insert(std::move(key));
  }
  stats.unique = seen.size();
  return stats;
}

/// Rep_n = 1 - unique/total n-grams, computed as (total - unique)/total so
/// simple fractions like 2/3 come out bit-exact. Texts with no n-grams of
/// order n score 0; callers that need to flag that case can inspect
/// ngram_stats(text, n).total.
inline double repetition_ratio(std::string_view text, std::size_t n) {
  const auto stats = ngram_stats(text, n);
  if (stats.total == 0) return 0.0;
  return static_cast<double>(stats.total - stats.unique) /
         static_cast<double>(stats.total);
}

// ---------------------------------------------------------------------------
// Citation markers: [[<letters><digits>]], e.g. [[R1]]. Marker ids are
// normalized to upper case; matching is therefore case-insensitive.
// ---------------------------------------------------------------------------

struct CitationMention {
  std::string marker_id;  // normalized, e.g. "R3"
  std::size_t begin = 0;  // byte offsets of the full [[...]] span
  std::size_t end = 0;
};

inline std::vector<CitationMention> parse_citations(std::string_view text) {
  std::vector<CitationMention> mentions;
  std::size_t i = 0;
  while (i + 3 < text.size()) {
    if (text[i] != '[' || text[i + 1] != '[') {
      ++i;
      continue;
    }
    std::size_t j = i + 2;
    std::size_t letters = 0;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) {
      ++j;
      ++letters;
    }
    std::size_t digits = 0;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
      ++j;
      ++digits;
    }
    if (letters >= 1 && digits >= 1 && j + 1 < text.size() && text[j] == ']' &&
        text[j + 1] == ']') {
      std::string id(text.substr(i + 2, j - i - 2));
      for (char& c : id) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      mentions.push_back({std::move(id), i, j + 2});
      i = j + 2;
    } else {
      ++i;
    }
  }
  return mentions;
}

// ---------------------------------------------------------------------------
// Sensemaking trajectories: markdown sections plus the eight-stage labels.
// ---------------------------------------------------------------------------

enum class Stage {
  Foraging,
  Shoebox,
  Schema,
  Hypothesis,
  Elaboration,
  Questioning,
  Reframe,
  Presentation,
};

inline constexpr std::size_t kStageCount = 8;

inline constexpr std::array<std::string_view, kStageCount> kStageNames = {
    "Foraging",  "Shoebox",     "Schema",  "Hypothesis",
    "Elaboration", "Questioning", "Reframe", "Presentation",
};

inline std::string_view stage_name(Stage s) {
  return kStageNames[static_cast<std::size_t>(s)];
}

namespace detail {
inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}
}  // namespace detail

inline std::optional<Stage> stage_from_label(std::string_view label) {
  for (std::size_t i = 0; i < kStageCount; ++i) {
    if (detail::iequals(label, kStageNames[i])) return static_cast<Stage>(i);
  }
  return std::nullopt;
}

/// Loads a stage-label vocabulary file: eight non-empty lines, one label per
/// stage in canonical order. Lets deployments relabel stages without
/// recompiling; the shipped data file lists the default names.
inline std::vector<std::string> load_stage_vocabulary(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read stage vocabulary: " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  if (labels.size() != kStageCount) {
    throw ParseError("stage vocabulary must list exactly 8 labels, got " +
                     std::to_string(labels.size()));
  }
  return labels;
}

struct Section {
  std::string heading;      // cleaned heading text ("" for anonymous)
  std::string heading_raw;  // exact heading line incl. terminator
  std::string body;         // exact bytes after the heading line
  std::size_t begin = 0;    // [begin, end) byte span over raw_text
  std::size_t end = 0;
};

struct StageTag {
  Stage stage;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Trajectory {
  std::string raw_text;
  std::vector<Section> sections;
  std::vector<StageTag> stage_tags;
};

namespace detail {

inline std::string_view trim_view(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Heading forms: markdown '#'-prefixed lines, and the bold "**§...**" pattern
// section-numbered trajectories use.
inline std::optional<std::string> heading_text(std::string_view line) {
  std::string_view t = trim_view(line);
  if (!t.empty() && t[0] == '#') {
    std::size_t level = 0;
    while (level < t.size() && t[level] == '#') ++level;
    return std::string(trim_view(t.substr(level)));
  }
  static constexpr std::string_view kSection = "\xC2\xA7";  // UTF-8 §
  if (t.size() >= 4 + kSection.size() && t.substr(0, 2) == "**" &&
      t.substr(2, kSection.size()) == kSection &&
      t.substr(t.size() - 2) == "**") {
    return std::string(trim_view(t.substr(2, t.size() - 4)));
  }
  return std::nullopt;
}

}  // namespace detail

/// Splits markdown into heading-delimited sections. Section spans are
/// disjoint, ordered, and concatenate back to the exact input. Stage tags are
/// recognized case-insensitively from the vocabulary labels appearing as a
/// word of a section heading; each heading yields at most one tag.
inline Trajectory parse_trajectory(
    std::string_view markdown,
    const std::vector<std::string>& vocabulary = {}) {
  Trajectory traj;
  traj.raw_text.assign(markdown);

  std::size_t pos = 0;
  bool have_section = false;
  Section current;
  auto close = [&](std::size_t end) {
    if (have_section) {
      current.end = end;
      current.body = traj.raw_text.substr(
          current.begin + current.heading_raw.size(),
          end - current.begin - current.heading_raw.size());
      traj.sections.push_back(std::move(current));
      current = Section{};
    }
  };
  while (pos < markdown.size()) {
    std::size_t eol = markdown.find('\n', pos);
    std::size_t line_end = (eol == std::string_view::npos) ? markdown.size() : eol + 1;
    std::string_view line = markdown.substr(pos, line_end - pos);
    std::string_view content = line;
    if (!content.empty() && content.back() == '\n') content.remove_suffix(1);

    if (auto head = detail::heading_text(content)) {
      close(pos);
      have_section = true;
      current.heading = *head;
      current.heading_raw.assign(line);
      current.begin = pos;
    } else if (!have_section) {
      // Anonymous leading section.
      have_section = true;
      current.heading.clear();
      current.heading_raw.clear();
      current.begin = pos;
    }
    pos = line_end;
  }
  close(markdown.size());

  const std::vector<std::string>* labels = vocabulary.empty() ? nullptr : &vocabulary;
  for (const auto& section : traj.sections) {
    // Words of the heading, as alphanumeric runs.
    std::string_view h = section.heading;
    std::size_t i = 0;
    std::optional<Stage> found;
    while (i < h.size() && !found) {
      while (i < h.size() && !std::isalnum(static_cast<unsigned char>(h[i]))) ++i;
      std::size_t b = i;
      while (i < h.size() && std::isalnum(static_cast<unsigned char>(h[i]))) ++i;
      if (i == b) break;
      std::string_view word = h.substr(b, i - b);
      if (labels) {
        for (std::size_t s = 0; s < labels->size() && s < kStageCount; ++s) {
          if (detail::iequals(word, (*labels)[s])) {
            found = static_cast<Stage>(s);
            break;
          }
        }
      } else {
        found = stage_from_label(word);
      }
    }
    if (found) traj.stage_tags.push_back({*found, section.begin, section.end});
  }
  return traj;
}

}  // namespace sensekit::text
