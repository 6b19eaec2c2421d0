#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "sensekit/corpus.hpp"
#include "sensekit/errors.hpp"
#include "sensekit/llmio.hpp"
#include "sensekit/trajgen.hpp"

namespace sensekit::cli {

namespace fs = std::filesystem;

struct JudgeSettings {
  int runs = 3;
  std::vector<std::size_t> groups = {3, 3, 2};
};

struct BundleSettings {
  std::size_t k = 5;
};

struct ChunkingSettings {
  std::size_t budget_tokens = 64;
  std::string scorer = "cosine";  // chunk scorer backend: cosine | remote
};

/// One config file drives every subcommand. Paths are resolved relative to
/// the process working directory; the seed is required so no run ever
/// depends on wall-clock defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  fs::path output_dir;
  fs::path corpus_path;
  fs::path templates_path;
  std::optional<fs::path> stage_vocabulary;
  corpus::SplitRatios split_ratios{0.8, 0.1, 0.1};
  std::vector<corpus::Mode> modes{corpus::Mode::Target, corpus::Mode::Infer};
  trajgen::TruncationPolicy truncation;
  BundleSettings bundle;
  llm::Sampling sampling;
  JudgeSettings judge;
  ChunkingSettings chunking;
  std::map<std::string, llm::ProviderConfig> providers;

  const llm::ProviderConfig& provider(const std::string& name) const {
    auto it = providers.find(name);
    if (it == providers.end())
      throw ArgumentError("config: no provider named '" + name + "'");
    return it->second;
  }
};

namespace detail {

inline llm::ProviderMode parse_provider_mode(const std::string& s) {
  if (s == "live") return llm::ProviderMode::Live;
  if (s == "record") return llm::ProviderMode::Record;
  if (s == "replay") return llm::ProviderMode::Replay;
  throw ArgumentError("config: provider mode must be live|record|replay, got '" + s + "'");
}

inline corpus::Mode parse_mode(const std::string& s) {
  if (s == "target") return corpus::Mode::Target;
  if (s == "infer") return corpus::Mode::Infer;
  throw ArgumentError("config: mode must be target|infer, got '" + s + "'");
}

inline llm::ProviderConfig parse_provider(const YAML::Node& node,
                                          const std::string& name) {
  llm::ProviderConfig cfg;
  if (!node["endpoint"])
    throw ArgumentError("config: provider '" + name + "' needs an endpoint");
  cfg.endpoint = node["endpoint"].as<std::string>();
  if (!node["model"])
    throw ArgumentError("config: provider '" + name + "' needs a model");
  cfg.model = node["model"].as<std::string>();
  if (node["api_key_env"]) cfg.api_key_env = node["api_key_env"].as<std::string>();
  if (node["timeout_s"]) cfg.timeout_s = node["timeout_s"].as<double>();
  if (node["max_retries"]) cfg.max_retries = node["max_retries"].as<int>();
  if (node["max_in_flight"]) cfg.max_in_flight = node["max_in_flight"].as<int>();
  if (node["backoff_base_s"]) cfg.backoff_base_s = node["backoff_base_s"].as<double>();
  if (node["mode"]) cfg.mode = parse_provider_mode(node["mode"].as<std::string>());
  if (node["transcript"]) cfg.transcript_path = node["transcript"].as<std::string>();
  if (node["context_budget_tokens"])
    cfg.context_budget_tokens = node["context_budget_tokens"].as<std::size_t>();
  cfg.validate();
  return cfg;
}

}  // namespace detail

inline RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("config file does not exist: " + path.string());
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }

  RunConfig cfg;
  if (!root["seed"])
    throw ArgumentError("config: 'seed' is required (no wall-clock defaults)");
  cfg.seed = root["seed"].as<std::uint64_t>();
  if (!root["output_dir"]) throw ArgumentError("config: 'output_dir' is required");
  cfg.output_dir = root["output_dir"].as<std::string>();
  if (!root["corpus"]) throw ArgumentError("config: 'corpus' is required");
  cfg.corpus_path = root["corpus"].as<std::string>();
  if (!root["templates"]) throw ArgumentError("config: 'templates' is required");
  cfg.templates_path = root["templates"].as<std::string>();
  if (root["stage_vocabulary"])
    cfg.stage_vocabulary = fs::path(root["stage_vocabulary"].as<std::string>());

  if (root["split"] && root["split"]["ratios"]) {
    const auto& r = root["split"]["ratios"];
    if (!r.IsSequence() || r.size() != 3)
      throw ArgumentError("config: split.ratios must be [train, validation, test]");
    cfg.split_ratios = {r[0].as<double>(), r[1].as<double>(), r[2].as<double>()};
  }
  if (root["modes"]) {
    cfg.modes.clear();
    for (const auto& m : root["modes"])
      cfg.modes.push_back(detail::parse_mode(m.as<std::string>()));
    if (cfg.modes.empty()) throw ArgumentError("config: 'modes' must not be empty");
  }
  if (root["truncation"]) {
    if (root["truncation"]["char_budget"])
      cfg.truncation.char_budget = root["truncation"]["char_budget"].as<std::size_t>();
    if (root["truncation"]["max_citations"])
      cfg.truncation.max_citations = root["truncation"]["max_citations"].as<std::size_t>();
  }
  if (root["bundle"] && root["bundle"]["k"])
    cfg.bundle.k = root["bundle"]["k"].as<std::size_t>();
  if (root["sampling"]) {
    const auto& s = root["sampling"];
    if (s["temperature"]) cfg.sampling.temperature = s["temperature"].as<double>();
    if (s["top_p"]) cfg.sampling.top_p = s["top_p"].as<double>();
    if (s["max_tokens"]) cfg.sampling.max_tokens = s["max_tokens"].as<int>();
  }
  if (root["judge"]) {
    if (root["judge"]["runs"]) cfg.judge.runs = root["judge"]["runs"].as<int>();
    if (root["judge"]["groups"]) {
      cfg.judge.groups.clear();
      for (const auto& g : root["judge"]["groups"])
        cfg.judge.groups.push_back(g.as<std::size_t>());
    }
  }
  if (root["chunking"]) {
    if (root["chunking"]["budget_tokens"])
      cfg.chunking.budget_tokens = root["chunking"]["budget_tokens"].as<std::size_t>();
    if (root["chunking"]["scorer"]) {
      cfg.chunking.scorer = root["chunking"]["scorer"].as<std::string>();
      if (cfg.chunking.scorer != "cosine" && cfg.chunking.scorer != "remote")
        throw ArgumentError("config: chunking.scorer must be cosine|remote");
    }
  }

  if (root["providers"]) {
    for (auto it = root["providers"].begin(); it != root["providers"].end(); ++it) {
      const auto name = it->first.as<std::string>();
      cfg.providers.emplace(name, detail::parse_provider(it->second, name));
    }
  }

  // Referenced inputs must exist before any provider is touched.
  if (!fs::exists(cfg.corpus_path))
    throw ArgumentError("config: corpus path does not exist: " + cfg.corpus_path.string());
  if (!fs::exists(cfg.templates_path))
    throw ArgumentError("config: templates path does not exist: " +
                        cfg.templates_path.string());
  if (cfg.stage_vocabulary && !fs::exists(*cfg.stage_vocabulary))
    throw ArgumentError("config: stage vocabulary does not exist: " +
                        cfg.stage_vocabulary->string());
  for (const auto& [name, provider] : cfg.providers) {
    if (provider.mode == llm::ProviderMode::Replay &&
        !fs::exists(provider.transcript_path))
      throw ArgumentError("config: provider '" + name + "' replays a transcript that "
                          "does not exist: " + provider.transcript_path.string());
  }
  if (cfg.judge.runs < 1) throw ArgumentError("config: judge.runs must be >= 1");
  return cfg;
}

}  // namespace sensekit::cli
