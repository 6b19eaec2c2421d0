#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "sensekit/corpus.hpp"
#include "sensekit/diversity.hpp"
#include "sensekit/errors.hpp"
#include "sensekit/hash.hpp"
#include "sensekit/llmio.hpp"
#include "sensekit/parallel.hpp"
#include "sensekit/textproc.hpp"

namespace sensekit::trajgen {

// ---------------------------------------------------------------------------
// Prompt templates: bodies with {{slot}} placeholders, loaded from YAML
// name -> body libraries plus standalone .txt prompts named by file stem.
// ---------------------------------------------------------------------------

class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string name, std::string body)
      : name_(std::move(name)), body_(std::move(body)) {
    std::size_t pos = 0;
    while ((pos = body_.find("{{", pos)) != std::string::npos) {
      std::size_t end = pos + 2;
      while (end < body_.size() &&
             (std::isalnum(static_cast<unsigned char>(body_[end])) || body_[end] == '_'))
        ++end;
      if (end + 1 < body_.size() && body_[end] == '}' && body_[end + 1] == '}' &&
          end > pos + 2) {
        std::string slot = body_.substr(pos + 2, end - pos - 2);
        if (std::find(slots_.begin(), slots_.end(), slot) == slots_.end())
          slots_.push_back(std::move(slot));
        pos = end + 2;
      } else {
        pos += 2;
      }
    }
  }

  const std::string& name() const { return name_; }
  const std::string& body() const { return body_; }
  const std::vector<std::string>& required_slots() const { return slots_; }

  bool has_slot(const std::string& slot) const {
    return std::find(slots_.begin(), slots_.end(), slot) != slots_.end();
  }

  /// Renders with every required slot bound; a missing value is an error
  /// naming the slot.
  std::string render(const std::map<std::string, std::string>& values) const {
    for (const auto& slot : slots_) {
      if (!values.count(slot))
        throw ArgumentError("template '" + name_ + "': missing slot '" + slot + "'");
    }
    std::string out;
    out.reserve(body_.size());
    std::size_t pos = 0;
    while (pos < body_.size()) {
      std::size_t open = body_.find("{{", pos);
      if (open == std::string::npos) {
        out.append(body_, pos, std::string::npos);
        break;
      }
      std::size_t end = open + 2;
      while (end < body_.size() &&
             (std::isalnum(static_cast<unsigned char>(body_[end])) || body_[end] == '_'))
        ++end;
      if (end + 1 < body_.size() && body_[end] == '}' && body_[end + 1] == '}' &&
          end > open + 2) {
        out.append(body_, pos, open - pos);
        out.append(values.at(body_.substr(open + 2, end - open - 2)));
        pos = end + 2;
      } else {
        out.append(body_, pos, open + 2 - pos);
        pos = open + 2;
      }
    }
    return out;
  }

  std::string body_hash() const { return to_hex(fnv1a64(body_)); }

 private:
  std::string name_;
  std::string body_;
  std::vector<std::string> slots_;
};

class TemplateLibrary {
 public:
  void add(PromptTemplate tmpl) {
    const std::string name = tmpl.name();
    if (!templates_.emplace(name, std::move(tmpl)).second)
      throw ArgumentError("duplicate template name: " + name);
  }

  const PromptTemplate& get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw NotFoundError("no template named '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return templates_.count(name) > 0; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(templates_.size());
    for (const auto& [name, tmpl] : templates_) out.push_back(name);
    return out;
  }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

namespace detail {

inline void load_template_file(const std::filesystem::path& file,
                               TemplateLibrary& lib) {
  const auto ext = file.extension().string();
  if (ext == ".yaml" || ext == ".yml") {
    YAML::Node root;
    try {
      root = YAML::LoadFile(file.string());
    } catch (const YAML::Exception& e) {
      throw ParseError("template library " + file.string() + ": " + e.what());
    }
    if (!root.IsMap())
      throw ParseError("template library " + file.string() + ": expected a name -> body map");
    for (auto it = root.begin(); it != root.end(); ++it) {
      const std::string name = it->first.as<std::string>();
      if (!it->second.IsScalar())
        throw ParseError("template library " + file.string() + ": template '" +
                         name + "' body must be a string (line " +
                         std::to_string(it->second.Mark().line + 1) + ")");
      lib.add(PromptTemplate(name, it->second.as<std::string>()));
    }
  } else if (ext == ".txt") {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read template: " + file.string());
    std::ostringstream body;
    body << in.rdbuf();
    lib.add(PromptTemplate(file.stem().string(), body.str()));
  }
}

}  // namespace detail

/// Loads a template library from a YAML file, a .txt prompt, or a directory
/// of both (scanned in sorted order). Duplicate names across files are an
/// error.
inline TemplateLibrary load_templates(const std::filesystem::path& path) {
  TemplateLibrary lib;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) detail::load_template_file(file, lib);
  } else if (std::filesystem::exists(path)) {
    detail::load_template_file(path, lib);
  } else {
    throw IoError("template path does not exist: " + path.string());
  }
  return lib;
}

// ---------------------------------------------------------------------------
// Cited-paper summaries.
// ---------------------------------------------------------------------------

inline std::string summarize_paper(llm::ProviderClient& provider,
                                   const corpus::PaperRecord& record,
                                   const PromptTemplate& tmpl,
                                   const llm::Sampling& sampling = {}) {
  if (record.abstract_text.empty() && record.body.empty())
    throw ArgumentError("summarize_paper: record '" + record.paper_id +
                        "' has neither abstract nor body");
  const std::string prompt = tmpl.render({{"title", record.title},
                                          {"abstract", record.abstract_text},
                                          {"body", record.body}});
  const std::string completion =
      provider.chat_complete({{"user", prompt}}, sampling);
  if (completion.empty())
    throw Error("summarize_paper: empty completion for '" + record.paper_id + "'");
  return completion;
}

// ---------------------------------------------------------------------------
// Context truncation: keep at most max_citations summaries (earliest first),
// then prune trailing characters of the kept block down to char_budget
// without ever splitting a [[...]] citation marker.
// ---------------------------------------------------------------------------

struct TruncationPolicy {
  std::size_t char_budget = 5000;
  std::size_t max_citations = 100;
};

struct SummaryEntry {
  std::string marker_id;
  std::string summary;
};

struct TruncationReport {
  std::vector<std::string> dropped_by_cap;     // marker ids over max_citations
  std::vector<std::string> dropped_by_budget;  // summaries fully pruned away
  std::size_t pruned_chars = 0;                // characters removed
};

struct TruncationResult {
  std::vector<SummaryEntry> kept;
  TruncationReport report;
};

inline TruncationResult truncate_context(const std::vector<SummaryEntry>& summaries,
                                         const TruncationPolicy& policy) {
  TruncationResult result;
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    if (i < policy.max_citations) result.kept.push_back(summaries[i]);
    else result.report.dropped_by_cap.push_back(summaries[i].marker_id);
  }

  std::size_t total = 0;
  for (const auto& entry : result.kept) total += entry.summary.size();

  while (total > policy.char_budget && !result.kept.empty()) {
    auto& last = result.kept.back();
    const std::size_t overage = total - policy.char_budget;
    if (overage >= last.summary.size()) {
      total -= last.summary.size();
      result.report.pruned_chars += last.summary.size();
      result.report.dropped_by_budget.push_back(last.marker_id);
      result.kept.pop_back();
      continue;
    }
    std::size_t cut = last.summary.size() - overage;
    for (const auto& mention : text::parse_citations(last.summary)) {
      if (mention.begin < cut && cut < mention.end) {
        cut = mention.begin;
        break;
      }
    }
    if (cut == 0) {
      total -= last.summary.size();
      result.report.pruned_chars += last.summary.size();
      result.report.dropped_by_budget.push_back(last.marker_id);
      result.kept.pop_back();
      continue;
    }
    result.report.pruned_chars += last.summary.size() - cut;
    total -= last.summary.size() - cut;
    last.summary.resize(cut);
    break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Trajectory generation.
// ---------------------------------------------------------------------------

struct TrajectoryRequest {
  corpus::Mode mode = corpus::Mode::Infer;
  std::vector<SummaryEntry> cited_summaries;
  std::optional<std::string> target_summary;  // required iff mode == Target
  llm::Sampling sampling;

  void validate() const {
    if (mode == corpus::Mode::Target && !target_summary)
      throw ArgumentError("trajectory request: target mode needs a target summary");
    if (mode == corpus::Mode::Infer && target_summary)
      throw ArgumentError("trajectory request: infer mode must not carry a target summary");
  }
};

inline constexpr const char* kInferTemplateName = "research_plan_infer";
inline constexpr const char* kTargetTemplateName = "research_plan_target";

/// One "[[MARKER]] summary" block per cited work, each marker exactly once.
inline std::string citations_block(const std::vector<SummaryEntry>& summaries) {
  std::string block;
  for (const auto& entry : summaries) {
    block += "[[" + entry.marker_id + "]] " + entry.summary + "\n\n";
  }
  return block;
}

inline std::string render_trajectory_prompt(const TrajectoryRequest& request,
                                            const TemplateLibrary& templates) {
  request.validate();
  std::map<std::string, std::string> values;
  values["citations"] = citations_block(request.cited_summaries);
  if (request.mode == corpus::Mode::Target) {
    values["target_summary"] = *request.target_summary;
    return templates.get(kTargetTemplateName).render(values);
  }
  return templates.get(kInferTemplateName).render(values);
}

inline text::Trajectory generate_trajectory(llm::ProviderClient& provider,
                                            const TrajectoryRequest& request,
                                            const TemplateLibrary& templates) {
  const std::string prompt = render_trajectory_prompt(request, templates);
  const std::string completion =
      provider.chat_complete({{"user", prompt}}, request.sampling);
  if (completion.empty()) throw Error("generate_trajectory: empty completion");
  return text::parse_trajectory(completion);
}

/// k independent generations from the same rendered prompt under distinct
/// sampling seeds. Members generate concurrently under the provider's
/// in-flight bound; results keep seed order.
inline diversity::GenerationBundle generate_bundle(
    llm::ProviderClient& provider, const TrajectoryRequest& request,
    std::size_t k, const std::vector<std::uint64_t>& seeds,
    const std::string& prompt_id, diversity::Condition condition,
    const TemplateLibrary& templates) {
  if (k < 2) throw ArgumentError("generate_bundle: k must be >= 2");
  if (seeds.size() != k)
    throw ArgumentError("generate_bundle: need exactly k seeds");
  const std::string prompt = render_trajectory_prompt(request, templates);

  diversity::GenerationBundle bundle;
  bundle.prompt_id = prompt_id;
  bundle.condition = condition;
  bundle.texts = parallel_map(
      seeds,
      [&](std::uint64_t seed) -> std::string {
        llm::Sampling sampling = request.sampling;
        sampling.seed = seed;
        try {
          std::string completion = provider.chat_complete({{"user", prompt}}, sampling);
          if (completion.empty())
            throw Error("empty completion");
          return completion;
        } catch (const std::exception& e) {
          throw Error("generate_bundle: member with seed " + std::to_string(seed) +
                      " failed: " + e.what());
        }
      },
      static_cast<std::size_t>(provider.config().max_in_flight));
  return bundle;
}

}  // namespace sensekit::trajgen
