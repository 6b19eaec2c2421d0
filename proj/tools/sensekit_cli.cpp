// Command-line surface for the sensemaking-trajectory toolkit. Every
// subcommand is driven by one YAML config, writes JSON reports plus aligned
// text tables under the configured output directory, and never mutates its
// inputs. With record/replay providers the whole pipeline is deterministic:
// re-running a subcommand over unchanged inputs reproduces its outputs
// byte for byte.

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "run_config.hpp"
#include "text_table.hpp"
#include "sensekit/sensekit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sensekit;
using cli::RunConfig;
using cli::TextTable;

namespace {

// ---------------------------------------------------------------------------
// Small I/O helpers.
// ---------------------------------------------------------------------------

void write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

void write_json_file(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::string content;
  for (const auto& row : rows) content += row.dump() + "\n";
  write_text(path, content);
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(line_number) +
                       ": " + e.what());
    }
  }
  return rows;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::unique_ptr<llm::ProviderClient> make_client(const RunConfig& cfg,
                                                 const std::string& name) {
  return std::make_unique<llm::ProviderClient>(cfg.provider(name));
}

std::vector<std::string> sorted_files(const fs::path& dir, const std::string& ext) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext)
      names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

diversity::Condition parse_condition(const std::string& s) {
  if (s == "infer") return diversity::Condition::Infer;
  if (s == "target") return diversity::Condition::Target;
  if (s == "both") return diversity::Condition::Both;
  if (s == "none") return diversity::Condition::None;
  throw ParseError("unknown bundle condition: " + s);
}

// ---------------------------------------------------------------------------
// Bundle storage: one directory per bundle holding member markdown files and
// a bundle.json sidecar.
// ---------------------------------------------------------------------------

struct StoredBundle {
  std::string prompt_id;
  std::string paper_id;
  std::string mode;
  diversity::Condition condition = diversity::Condition::None;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> member_files;
  std::vector<std::string> texts;
  std::vector<judge::ReferenceDoc> refs;
};

std::vector<StoredBundle> load_bundles(const fs::path& bundles_dir,
                                       std::optional<std::size_t> limit = {}) {
  if (!fs::is_directory(bundles_dir))
    throw IoError("bundle directory does not exist: " + bundles_dir.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(bundles_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "bundle.json"))
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  if (limit && dirs.size() > *limit) dirs.resize(*limit);

  std::vector<StoredBundle> bundles;
  for (const auto& dir : dirs) {
    json sidecar = json::parse(read_text(dir / "bundle.json"));
    StoredBundle b;
    b.prompt_id = sidecar.at("prompt_id").get<std::string>();
    b.paper_id = sidecar.value("paper_id", "");
    b.mode = sidecar.value("mode", "none");
    b.condition = parse_condition(sidecar.value("condition", b.mode));
    if (sidecar.contains("seeds"))
      b.seeds = sidecar["seeds"].get<std::vector<std::uint64_t>>();
    for (const auto& m : sidecar.at("members")) {
      b.member_files.push_back(m.get<std::string>());
      b.texts.push_back(read_text(dir / m.get<std::string>()));
    }
    if (sidecar.contains("refs"))
      for (const auto& r : sidecar["refs"])
        b.refs.push_back({r.at("marker").get<std::string>(),
                          r.at("synopsis").get<std::string>()});
    bundles.push_back(std::move(b));
  }
  return bundles;
}

std::map<std::string, std::string> load_summaries(const fs::path& path) {
  std::map<std::string, std::string> out;
  for (const auto& row : read_jsonl(path))
    out[row.at("paper_id").get<std::string>()] = row.at("summary").get<std::string>();
  return out;
}

// split key: paper_id + '\x1f' + mode name
std::map<std::string, std::string> load_splits(const fs::path& path) {
  std::map<std::string, std::string> out;
  for (const auto& row : read_jsonl(path)) {
    out[row.at("paper_id").get<std::string>() + "\x1f" +
        row.at("mode").get<std::string>()] = row.at("split").get<std::string>();
  }
  return out;
}

diversity::DiversityBackend make_backend(const RunConfig& cfg,
                                         std::shared_ptr<llm::ProviderClient> embedder) {
  diversity::DiversityBackend backend;
  backend.embed = [embedder](const std::vector<std::string>& texts) {
    return embedder->embed(texts);
  };
  backend.embed_context_budget = embedder->config().context_budget_tokens;
  backend.chunk_budget_tokens = cfg.chunking.budget_tokens;
  if (cfg.chunking.scorer == "remote")
    backend.scorer = diversity::remote_chunk_scorer(*embedder);
  return backend;
}

std::uint64_t derive_seed(const RunConfig& cfg, const std::string& salt) {
  return splitmix64(fnv1a64(salt) ^ splitmix64(cfg.seed));
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& cfg, std::optional<std::size_t> limit) {
  auto loaded = corpus::load_corpus(cfg.corpus_path, limit);
  for (const auto& skip : loaded.skipped)
    std::cerr << "[ingest] skipped line " << skip.line_number << ": " << skip.reason
              << "\n";
  corpus::CorpusIndex index(std::move(loaded.records));

  std::vector<json> split_rows;
  json counts = json::object();
  for (auto mode : cfg.modes) {
    auto assignments =
        corpus::assign_splits(index.ids(), cfg.split_ratios, cfg.seed, mode);
    json mode_counts = {{"train", 0}, {"validation", 0}, {"test", 0}};
    for (const auto& a : assignments) {
      split_rows.push_back({{"paper_id", a.paper_id},
                            {"split", std::string(corpus::split_name(a.split))},
                            {"mode", std::string(corpus::mode_name(a.mode))}});
      auto& slot = mode_counts[std::string(corpus::split_name(a.split))];
      slot = slot.get<int>() + 1;
    }
    counts[std::string(corpus::mode_name(mode))] = mode_counts;
  }

  json skipped = json::array();
  for (const auto& s : loaded.skipped)
    skipped.push_back({{"line", s.line_number}, {"reason", s.reason}});
  json report = {{"records", index.size()},
                 {"duplicate_ids", index.duplicates()},
                 {"skipped_lines", skipped},
                 {"counts", counts}};

  write_jsonl(cfg.output_dir / "ingest" / "splits.jsonl", split_rows);
  write_json_file(cfg.output_dir / "ingest" / "ingest_report.json", report);

  TextTable table({"mode", "train", "validation", "test"});
  for (auto mode : cfg.modes) {
    const auto m = std::string(corpus::mode_name(mode));
    table.add_row({m, counts[m]["train"].dump(), counts[m]["validation"].dump(),
                   counts[m]["test"].dump()});
  }
  std::cout << table.str();
  std::cerr << "[ingest] " << index.size() << " records, " << loaded.skipped.size()
            << " skipped lines\n";
  return 0;
}

// ---------------------------------------------------------------------------
// summarize
// ---------------------------------------------------------------------------

int cmd_summarize(const RunConfig& cfg, std::optional<std::size_t> limit) {
  auto loaded = corpus::load_corpus(cfg.corpus_path, limit);
  auto templates = trajgen::load_templates(cfg.templates_path);
  const auto& tmpl = templates.get("paper_summary");
  auto provider = make_client(cfg, "generator");

  std::vector<std::string> skipped_empty;
  std::vector<const corpus::PaperRecord*> work;
  for (const auto& rec : loaded.records) {
    if (rec.abstract_text.empty() && rec.body.empty())
      skipped_empty.push_back(rec.paper_id);
    else
      work.push_back(&rec);
  }

  auto summaries = parallel_map(
      work,
      [&](const corpus::PaperRecord* rec) {
        return trajgen::summarize_paper(*provider, *rec, tmpl, cfg.sampling);
      },
      static_cast<std::size_t>(provider->config().max_in_flight));

  std::vector<json> rows;
  for (std::size_t i = 0; i < work.size(); ++i) {
    rows.push_back({{"paper_id", work[i]->paper_id},
                    {"summary", summaries[i]},
                    {"intermediate", true}});
  }
  write_jsonl(cfg.output_dir / "summaries" / "summaries.jsonl", rows);
  write_json_file(cfg.output_dir / "summaries" / "summarize_report.json",
                  {{"summarized", rows.size()},
                   {"skipped_empty_records", skipped_empty},
                   {"provider_model", provider->config().model}});
  std::cerr << "[summarize] " << rows.size() << " summaries ("
            << skipped_empty.size() << " records without text)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

int cmd_generate(const RunConfig& cfg, std::optional<std::size_t> limit,
                 std::size_t min_citations) {
  auto loaded = corpus::load_corpus(cfg.corpus_path);
  corpus::CorpusIndex index(std::move(loaded.records));
  auto summaries = load_summaries(cfg.output_dir / "summaries" / "summaries.jsonl");
  auto splits = load_splits(cfg.output_dir / "ingest" / "splits.jsonl");
  auto templates = trajgen::load_templates(cfg.templates_path);
  auto provider = make_client(cfg, "generator");

  std::vector<json> dataset_rows;
  json skipped = json::array();
  std::size_t bundles_written = 0;
  std::size_t targets_done = 0;

  for (const auto& target_id : index.ids()) {
    if (limit && targets_done >= *limit) break;
    auto hood = corpus::build_neighborhood(index, target_id);
    if (hood.size() < min_citations) continue;

    // Markers R1..RN in citation order; cited papers without a summary are
    // reported and excluded.
    std::vector<trajgen::SummaryEntry> entries;
    for (std::size_t i = 0; i < hood.cited.size(); ++i) {
      auto it = summaries.find(hood.cited[i].paper_id);
      if (it == summaries.end()) {
        skipped.push_back(
            {{"paper_id", target_id},
             {"reason", "no summary for cited " + hood.cited[i].paper_id}});
        continue;
      }
      entries.push_back({"R" + std::to_string(i + 1), it->second});
    }
    if (entries.size() < min_citations) continue;
    ++targets_done;

    auto truncated = trajgen::truncate_context(entries, cfg.truncation);

    for (auto mode : cfg.modes) {
      const std::string mode_str(corpus::mode_name(mode));
      const std::string prompt_id = target_id + "-" + mode_str;

      trajgen::TrajectoryRequest request;
      request.mode = mode;
      request.cited_summaries = truncated.kept;
      request.sampling = cfg.sampling;
      if (mode == corpus::Mode::Target) {
        auto it = summaries.find(target_id);
        if (it == summaries.end()) {
          skipped.push_back({{"paper_id", target_id},
                             {"reason", "target mode needs a target summary"}});
          continue;
        }
        request.target_summary = it->second;
      }

      std::vector<std::uint64_t> seeds(cfg.bundle.k);
      const std::uint64_t base = derive_seed(cfg, prompt_id);
      for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = base + i;

      auto bundle = trajgen::generate_bundle(
          *provider, request, cfg.bundle.k, seeds, prompt_id,
          mode == corpus::Mode::Target ? diversity::Condition::Target
                                       : diversity::Condition::Infer,
          templates);

      const fs::path dir = cfg.output_dir / "generate" / "bundles" / prompt_id;
      json members = json::array();
      for (std::size_t i = 0; i < bundle.texts.size(); ++i) {
        const std::string member = "member_" + std::to_string(i) + ".md";
        write_text(dir / member, bundle.texts[i]);
        members.push_back(member);
      }
      json refs = json::array();
      for (const auto& e : truncated.kept)
        refs.push_back({{"marker", e.marker_id}, {"synopsis", e.summary}});
      const auto& tmpl = templates.get(mode == corpus::Mode::Target
                                           ? trajgen::kTargetTemplateName
                                           : trajgen::kInferTemplateName);
      json sidecar = {
          {"prompt_id", prompt_id},
          {"paper_id", target_id},
          {"mode", mode_str},
          {"condition", mode_str},
          {"seeds", seeds},
          {"members", members},
          {"refs", refs},
          {"provider_model", provider->config().model},
          {"template_name", tmpl.name()},
          {"template_hash", tmpl.body_hash()},
          // Summaries are pipeline intermediates, never training features.
          {"summaries_intermediate", true},
          {"truncation",
           {{"dropped_by_cap", truncated.report.dropped_by_cap},
            {"dropped_by_budget", truncated.report.dropped_by_budget},
            {"pruned_chars", truncated.report.pruned_chars}}}};
      write_json_file(dir / "bundle.json", sidecar);
      ++bundles_written;

      auto split_it = splits.find(target_id + "\x1f" + mode_str);
      const std::string split =
          split_it == splits.end() ? "unassigned" : split_it->second;
      for (std::size_t i = 0; i < bundle.texts.size(); ++i) {
        dataset_rows.push_back({{"paper_id", target_id},
                                {"prompt_id", prompt_id},
                                {"mode", mode_str},
                                {"split", split},
                                {"member", i},
                                {"neighborhood_size", hood.size()},
                                {"trajectory", bundle.texts[i]}});
      }
      std::cerr << "[generate] " << prompt_id << ": " << bundle.texts.size()
                << " members\n";
    }
  }

  write_jsonl(cfg.output_dir / "generate" / "dataset.jsonl", dataset_rows);
  write_json_file(cfg.output_dir / "generate" / "generate_report.json",
                  {{"bundles", bundles_written},
                   {"dataset_rows", dataset_rows.size()},
                   {"skipped", skipped},
                   {"k", cfg.bundle.k}});
  std::cerr << "[generate] wrote " << bundles_written << " bundles\n";
  return 0;
}

// ---------------------------------------------------------------------------
// diversity
// ---------------------------------------------------------------------------

int cmd_diversity(const RunConfig& cfg, const std::string& metric_arg,
                  std::optional<fs::path> bundles_dir,
                  std::optional<std::size_t> limit) {
  const fs::path dir = bundles_dir.value_or(cfg.output_dir / "generate" / "bundles");
  auto stored = load_bundles(dir, limit);
  if (stored.empty()) throw ArgumentError("no bundles found under " + dir.string());

  std::vector<diversity::GenerationBundle> bundles;
  for (const auto& b : stored) {
    diversity::GenerationBundle g;
    g.prompt_id = b.prompt_id;
    g.condition = b.condition;
    g.texts = b.texts;
    bundles.push_back(std::move(g));
  }

  std::vector<diversity::Metric> metrics;
  if (metric_arg == "all") {
    metrics = {diversity::Metric::SelfBleu, diversity::Metric::Embedding,
               diversity::Metric::ChunkedScore, diversity::Metric::SentenceMovers};
  } else if (metric_arg == "self_bleu") {
    metrics = {diversity::Metric::SelfBleu};
  } else if (metric_arg == "embedding") {
    metrics = {diversity::Metric::Embedding};
  } else if (metric_arg == "chunked_score") {
    metrics = {diversity::Metric::ChunkedScore};
  } else if (metric_arg == "sentence_movers") {
    metrics = {diversity::Metric::SentenceMovers};
  } else {
    throw ArgumentError("unknown metric: " + metric_arg);
  }

  std::shared_ptr<llm::ProviderClient> embedder;
  diversity::DiversityBackend backend;
  const bool needs_embedder = metric_arg != "self_bleu";
  if (needs_embedder) {
    embedder = std::make_shared<llm::ProviderClient>(cfg.provider("embedder"));
    backend = make_backend(cfg, embedder);
  }

  TextTable table({"metric", "condition", "diversity", "overall"});
  for (auto metric : metrics) {
    auto report = diversity::diversity_report(bundles, metric, backend);
    json bundle_rows = json::array();
    for (const auto& b : report.bundles)
      bundle_rows.push_back({{"prompt_id", b.prompt_id},
                             {"condition", std::string(condition_name(b.condition))},
                             {"similarity", b.similarity}});
    json diversity_json = json::object();
    for (const auto& [cond, d] : report.diversity)
      diversity_json[std::string(condition_name(cond))] = d;
    json out = {
        {"metric", std::string(metric_name(metric))},
        {"bundles", bundle_rows},
        {"diversity", diversity_json},
        {"overall", report.overall},
        {"similarity_range", {report.similarity_min, report.similarity_max}},
        {"diversity_range", {1.0 - report.similarity_max, 1.0 - report.similarity_min}},
        {"chunk_budget_tokens", cfg.chunking.budget_tokens}};
    write_json_file(cfg.output_dir / "diversity" /
                        ("diversity_" + std::string(metric_name(metric)) + ".json"),
                    out);
    for (const auto& [cond, d] : report.diversity)
      table.add_row({std::string(metric_name(metric)),
                     std::string(condition_name(cond)), TextTable::num(d),
                     TextTable::num(report.overall)});
  }
  std::cout << table.str();
  return 0;
}

// ---------------------------------------------------------------------------
// rubric
// ---------------------------------------------------------------------------

int cmd_rubric(const RunConfig& cfg, std::optional<fs::path> bundles_dir,
               std::optional<int> runs_override, std::optional<std::size_t> limit) {
  const fs::path dir = bundles_dir.value_or(cfg.output_dir / "generate" / "bundles");
  auto stored = load_bundles(dir, limit);
  if (stored.empty()) throw ArgumentError("no bundles found under " + dir.string());
  auto templates = trajgen::load_templates(cfg.templates_path);
  const auto& tmpl = templates.get("judge_rubric");
  auto provider = make_client(cfg, "judge");
  const int runs = runs_override.value_or(cfg.judge.runs);

  struct Work {
    const StoredBundle* bundle;
    std::size_t member;
  };
  std::vector<Work> work;
  for (const auto& b : stored)
    for (std::size_t m = 0; m < b.texts.size(); ++m) work.push_back({&b, m});

  auto outcomes = parallel_map(
      work,
      [&](const Work& w) {
        judge::JudgeRunPlan plan;
        plan.runs = runs;
        plan.seed =
            derive_seed(cfg, w.bundle->prompt_id + "#" + std::to_string(w.member));
        return judge::run_rubric_eval(*provider, tmpl, w.bundle->refs,
                                      w.bundle->texts[w.member], plan);
      },
      static_cast<std::size_t>(provider->config().max_in_flight));

  json proposals = json::array();
  std::map<std::string, std::vector<judge::RubricScoreCard>> by_condition;
  std::size_t failed_runs = 0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const auto& w = work[i];
    const auto& result = outcomes[i];
    json cards = json::array();
    for (const auto& card : result.cards) {
      json scores = json::object();
      for (std::size_t d = 0; d < judge::kRubricSize; ++d)
        scores[std::string(judge::kRubricDimensions[d])] = card.scores[d];
      cards.push_back({{"run", card.run_id}, {"scores", scores}});
      by_condition[w.bundle->mode].push_back(card);
    }
    json failures = json::array();
    for (const auto& f : result.failures) {
      failures.push_back({{"run", f.run_index}, {"reason", f.reason}});
      ++failed_runs;
    }
    json entry = {{"prompt_id", w.bundle->prompt_id},
                  {"member", w.bundle->member_files[w.member]},
                  {"cards", cards},
                  {"failures", failures}};
    if (!result.cards.empty()) {
      auto mean = judge::aggregate_runs(result.cards);
      json mean_scores = json::object();
      for (std::size_t d = 0; d < judge::kRubricSize; ++d)
        mean_scores[std::string(judge::kRubricDimensions[d])] = mean.means[d];
      entry["mean"] = mean_scores;
      entry["overall"] = mean.overall;
    }
    proposals.push_back(std::move(entry));
  }

  TextTable table({"condition", "Nov.", "Sig.", "Grnd.", "Sound.", "Meth.", "Feas.",
                   "Sense.", "Clar.", "Overall"});
  json by_condition_json = json::object();
  for (const auto& [condition, cards] : by_condition) {
    auto mean = judge::aggregate_runs(cards);
    json scores = json::object();
    std::vector<std::string> row{condition};
    for (std::size_t d = 0; d < judge::kRubricSize; ++d) {
      scores[std::string(judge::kRubricDimensions[d])] = mean.means[d];
      row.push_back(TextTable::num(mean.means[d], 2));
    }
    scores["Overall"] = mean.overall;
    row.push_back(TextTable::num(mean.overall, 2));
    by_condition_json[condition] = scores;
    table.add_row(row);
  }

  json report = {{"judge_model", provider->config().model},
                 {"runs", runs},
                 {"proposals", proposals},
                 {"by_condition", by_condition_json},
                 {"failed_runs", failed_runs}};
  write_json_file(cfg.output_dir / "rubric" / "rubric_report.json", report);
  write_text(cfg.output_dir / "rubric" / "rubric_table.txt", table.str());
  std::cout << table.str();
  if (failed_runs > 0)
    std::cerr << "[rubric] " << failed_runs
              << " runs failed; see rubric_report.json\n";
  return 0;
}

// ---------------------------------------------------------------------------
// reward
// ---------------------------------------------------------------------------

int cmd_reward(const RunConfig& cfg, std::optional<fs::path> bundles_dir,
               std::optional<fs::path> candidates_dir,
               std::optional<fs::path> context_file,
               std::optional<std::size_t> limit) {
  auto provider = make_client(cfg, "judge");

  struct Candidate {
    std::string id;
    std::string text;
    std::string context;
  };
  std::vector<Candidate> candidates;
  if (candidates_dir) {
    if (!context_file)
      throw ArgumentError("--candidates needs --context for the shared input prompt");
    const std::string context = read_text(*context_file);
    for (const auto& name : sorted_files(*candidates_dir, ".md"))
      candidates.push_back({name, read_text(*candidates_dir / name), context});
  } else {
    const fs::path dir = bundles_dir.value_or(cfg.output_dir / "generate" / "bundles");
    for (const auto& b : load_bundles(dir, limit)) {
      std::string context;
      for (const auto& r : b.refs)
        context += "[[" + r.marker_id + "]] " + r.synopsis + "\n\n";
      for (std::size_t m = 0; m < b.texts.size(); ++m)
        candidates.push_back(
            {b.prompt_id + "/" + b.member_files[m], b.texts[m], context});
    }
  }
  if (candidates.empty()) throw ArgumentError("no candidates to score");

  auto outcomes = parallel_map(
      candidates,
      [&](const Candidate& c) -> json {
        try {
          auto result = judge::grouped_reward_scores(*provider, c.text, {c.context},
                                                     cfg.judge.groups);
          return json{{"candidate", c.id},
                      {"reward", result.reward},
                      {"scores", result.scores}};
        } catch (const ParseError& e) {
          // Atomic per candidate: a malformed group leaves no partial reward.
          return json{{"candidate", c.id}, {"error", e.what()}};
        }
      },
      static_cast<std::size_t>(provider->config().max_in_flight));

  json rows = json::array();
  TextTable table({"candidate", "reward"});
  for (const auto& row : outcomes) {
    rows.push_back(row);
    table.add_row({row.at("candidate").get<std::string>(),
                   row.contains("reward")
                       ? TextTable::num(row["reward"].get<double>(), 3)
                       : std::string("error")});
  }
  write_json_file(cfg.output_dir / "reward" / "rewards.json",
                  {{"judge_model", provider->config().model},
                   {"groups", cfg.judge.groups},
                   {"candidates", rows}});
  std::cout << table.str();
  return 0;
}

// ---------------------------------------------------------------------------
// cite-stats
// ---------------------------------------------------------------------------

int cmd_cite_stats(const RunConfig& cfg, const fs::path& teacher_dir,
                   const fs::path& student_dir) {
  auto teacher_files = sorted_files(teacher_dir, ".md");
  auto student_files = sorted_files(student_dir, ".md");
  std::set<std::string> student_set(student_files.begin(), student_files.end());

  json rows = json::array();
  TextTable table({"pair", "total_diff", "unique_diff", "jaccard_distance"});
  for (const auto& name : teacher_files) {
    if (!student_set.count(name)) {
      std::cerr << "[cite-stats] no student counterpart for " << name << "\n";
      continue;
    }
    auto teacher = cite::profile_from_text(read_text(teacher_dir / name));
    auto student = cite::profile_from_text(read_text(student_dir / name));
    auto diff = cite::citation_l1_counts(teacher, student);
    const double jd = cite::jaccard_distance(teacher.unique_ids, student.unique_ids);
    rows.push_back({{"pair", name},
                    {"teacher_total", teacher.total_mentions},
                    {"student_total", student.total_mentions},
                    {"total_diff", diff.total_diff},
                    {"unique_diff", diff.unique_diff},
                    {"jaccard_distance", jd}});
    table.add_row({name, std::to_string(diff.total_diff),
                   std::to_string(diff.unique_diff), TextTable::num(jd)});
  }
  if (rows.empty()) throw ArgumentError("no matched trajectory pairs");

  write_json_file(cfg.output_dir / "cite_stats" / "cite_stats.json",
                  {{"case_insensitive_markers", true}, {"rows", rows}});
  std::cout << table.str();
  return 0;
}

// ---------------------------------------------------------------------------
// agreement
// ---------------------------------------------------------------------------

agreement::RatingMatrix matrix_from_json(const json& j) {
  agreement::RatingMatrix m;
  m.raters = j.at("raters").get<std::vector<std::string>>();
  m.items = j.at("items").get<std::vector<std::string>>();
  for (const auto& row : j.at("cells")) {
    std::vector<std::optional<int>> cells;
    for (const auto& cell : row) {
      if (cell.is_null()) cells.push_back(std::nullopt);
      else cells.push_back(cell.get<int>());
    }
    m.cells.push_back(std::move(cells));
  }
  return m;
}

agreement::RatingMatrix matrix_from_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  agreement::RatingMatrix m;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream row(line);
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (header) {
      for (std::size_t i = 1; i < cells.size(); ++i) m.items.push_back(cells[i]);
      header = false;
      continue;
    }
    if (cells.empty()) continue;
    m.raters.push_back(cells[0]);
    std::vector<std::optional<int>> scores;
    for (std::size_t i = 1; i < cells.size() && i <= m.items.size(); ++i) {
      if (cells[i].empty()) scores.push_back(std::nullopt);
      else scores.push_back(std::stoi(cells[i]));
    }
    while (scores.size() < m.items.size()) scores.push_back(std::nullopt);
    m.cells.push_back(std::move(scores));
  }
  return m;
}

int cmd_agreement(const RunConfig& cfg, const fs::path& ratings_path,
                  const std::string& metric_arg) {
  agreement::DistanceMetric metric = agreement::DistanceMetric::Interval;
  if (metric_arg == "nominal") metric = agreement::DistanceMetric::Nominal;
  else if (metric_arg == "ordinal") metric = agreement::DistanceMetric::Ordinal;
  else if (metric_arg != "interval")
    throw ArgumentError("metric must be interval|ordinal|nominal");

  std::map<std::string, agreement::RatingMatrix> dimensions;
  if (ratings_path.extension() == ".csv") {
    dimensions[ratings_path.stem().string()] = matrix_from_csv(ratings_path);
  } else {
    json j = json::parse(read_text(ratings_path));
    for (auto it = j.at("dimensions").begin(); it != j.at("dimensions").end(); ++it)
      dimensions[it.key()] = matrix_from_json(it.value());
  }

  json out = json::object();
  TextTable table({"dimension", "alpha", "note"});
  double alpha_sum = 0.0;
  for (const auto& [name, matrix] : dimensions) {
    auto result = agreement::krippendorff_alpha(matrix, metric);
    out[name] = {{"alpha", result.alpha},
                 {"zero_expected_disagreement", result.zero_expected_disagreement}};
    alpha_sum += result.alpha;
    table.add_row({name, TextTable::num(result.alpha, 3),
                   result.zero_expected_disagreement ? "all ratings identical" : ""});
  }
  const double overall = alpha_sum / static_cast<double>(dimensions.size());
  table.add_row({"Overall", TextTable::num(overall, 3), "mean of dimension alphas"});

  write_json_file(cfg.output_dir / "agreement" / "agreement.json",
                  {{"metric", std::string(agreement::metric_name(metric))},
                   {"dimensions", out},
                   {"overall_alpha_mean", overall}});
  std::cout << table.str();
  return 0;
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

int cmd_stages(const RunConfig& cfg, std::optional<fs::path> trajectories_dir,
               std::optional<fs::path> bundles_dir, const std::string& backend,
               std::optional<std::size_t> limit) {
  std::vector<std::string> vocabulary;
  if (cfg.stage_vocabulary)
    vocabulary = text::load_stage_vocabulary(*cfg.stage_vocabulary);

  std::vector<std::pair<std::string, std::string>> docs;  // id -> text
  if (trajectories_dir) {
    for (const auto& name : sorted_files(*trajectories_dir, ".md"))
      docs.push_back({name, read_text(*trajectories_dir / name)});
  } else {
    const fs::path dir = bundles_dir.value_or(cfg.output_dir / "generate" / "bundles");
    for (const auto& b : load_bundles(dir, limit))
      for (std::size_t m = 0; m < b.texts.size(); ++m)
        docs.push_back({b.prompt_id + "/" + b.member_files[m], b.texts[m]});
  }
  if (docs.empty()) throw ArgumentError("no trajectories to annotate");

  std::array<std::size_t, text::kStageCount> counts{};
  std::size_t unlabeled = 0;

  if (backend == "heuristic") {
    for (const auto& [id, raw] : docs) {
      auto traj = text::parse_trajectory(raw, vocabulary);
      for (const auto& tag : traj.stage_tags)
        ++counts[static_cast<std::size_t>(tag.stage)];
      unlabeled += traj.sections.size() - traj.stage_tags.size();
    }
  } else if (backend == "judge") {
    auto templates = trajgen::load_templates(cfg.templates_path);
    const auto& tmpl = templates.get("stage_labeling");
    auto provider = make_client(cfg, "judge");
    using StageCounts = std::pair<std::array<std::size_t, text::kStageCount>, std::size_t>;
    auto labeled = parallel_map(
        docs,
        [&](const std::pair<std::string, std::string>& doc) -> StageCounts {
          auto traj = text::parse_trajectory(doc.second, vocabulary);
          StageCounts result{};
          if (traj.sections.empty()) return result;
          std::string sections;
          for (std::size_t s = 0; s < traj.sections.size(); ++s) {
            const auto& section = traj.sections[s];
            sections += std::to_string(s + 1) + ": " + section.heading + "\n" +
                        section.body.substr(0, 300) + "\n";
          }
          const std::string reply = provider->chat_complete(
              {{"user", tmpl.render({{"sections", sections}})}},
              judge::default_judge_sampling());
          // Expect one "<index>: <StageName>" line per section.
          std::map<std::size_t, text::Stage> assigned;
          std::istringstream lines(reply);
          std::string line;
          while (std::getline(lines, line)) {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            std::size_t idx = 0;
            try {
              idx = static_cast<std::size_t>(std::stoul(line.substr(0, colon)));
            } catch (...) {
              continue;
            }
            std::string label = line.substr(colon + 1);
            const auto b = label.find_first_not_of(" \t");
            const auto e = label.find_last_not_of(" \t\r");
            if (b == std::string::npos) continue;
            label = label.substr(b, e - b + 1);
            if (auto stage = text::stage_from_label(label);
                stage && idx >= 1 && idx <= traj.sections.size())
              assigned[idx] = *stage;
          }
          for (std::size_t s = 1; s <= traj.sections.size(); ++s) {
            if (auto it = assigned.find(s); it != assigned.end())
              ++result.first[static_cast<std::size_t>(it->second)];
            else
              ++result.second;
          }
          return result;
        },
        static_cast<std::size_t>(provider->config().max_in_flight));
    for (const auto& [local, local_unlabeled] : labeled) {
      for (std::size_t s = 0; s < text::kStageCount; ++s) counts[s] += local[s];
      unlabeled += local_unlabeled;
    }
  } else {
    throw ArgumentError("backend must be heuristic|judge");
  }

  std::size_t labeled_total = 0;
  for (auto c : counts) labeled_total += c;
  if (labeled_total == 0)
    throw ArgumentError("no stage-labeled sections found; check the vocabulary");

  json frequencies = json::object();
  json counts_json = json::object();
  TextTable table({"stage", "sections", "frequency"});
  for (std::size_t s = 0; s < text::kStageCount; ++s) {
    const std::string name =
        vocabulary.empty() ? std::string(text::kStageNames[s]) : vocabulary[s];
    const double freq =
        static_cast<double>(counts[s]) / static_cast<double>(labeled_total);
    frequencies[name] = freq;
    counts_json[name] = counts[s];
    table.add_row({name, std::to_string(counts[s]), TextTable::num(freq)});
  }
  write_json_file(cfg.output_dir / "stages" / "stages.json",
                  {{"backend", backend},
                   {"frequencies", frequencies},
                   {"section_counts", counts_json},
                   {"labeled_sections", labeled_total},
                   {"unlabeled_sections", unlabeled},
                   {"trajectories", docs.size()}});
  std::cout << table.str();
  return 0;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

corpus::Split parse_split(const std::string& s) {
  if (s == "train") return corpus::Split::Train;
  if (s == "validation") return corpus::Split::Validation;
  if (s == "test") return corpus::Split::Test;
  throw ParseError("unknown split: " + s);
}

int cmd_stats(const RunConfig& cfg, std::optional<fs::path> dataset_path) {
  const fs::path path =
      dataset_path.value_or(cfg.output_dir / "generate" / "dataset.jsonl");
  std::vector<corpus::DatasetRow> rows;
  for (const auto& j : read_jsonl(path)) {
    corpus::DatasetRow row;
    row.paper_id = j.at("paper_id").get<std::string>();
    const std::string split = j.value("split", "train");
    row.split = split == "unassigned" ? corpus::Split::Train : parse_split(split);
    row.mode = cli::detail::parse_mode(j.at("mode").get<std::string>());
    row.trajectory = j.at("trajectory").get<std::string>();
    row.neighborhood_size = j.value("neighborhood_size", std::size_t{0});
    rows.push_back(std::move(row));
  }
  auto stats = corpus::compute_stats(rows);

  auto averages_json = [](const corpus::StatAverages& a) {
    return json{{"avg_length_tokens", a.avg_length_tokens},
                {"avg_cited_refs", a.avg_cited_refs},
                {"avg_citation_neighborhood", a.avg_citation_neighborhood}};
  };
  json counts = json::object();
  for (std::size_t s = 0; s < 3; ++s) {
    const auto split = static_cast<corpus::Split>(s);
    counts[std::string(corpus::split_name(split))] = {
        {"target", stats.counts[s][0]}, {"infer", stats.counts[s][1]}};
  }
  json out = {{"records", stats.record_count},
              {"counts", counts},
              {"target", averages_json(stats.per_mode[0])},
              {"infer", averages_json(stats.per_mode[1])},
              {"total", averages_json(stats.total)}};
  write_json_file(cfg.output_dir / "stats" / "stats.json", out);

  TextTable table({"column", "infer", "target", "total"});
  table.add_row(
      {"avg_length_tokens", TextTable::num(stats.per_mode[1].avg_length_tokens, 1),
       TextTable::num(stats.per_mode[0].avg_length_tokens, 1),
       TextTable::num(stats.total.avg_length_tokens, 1)});
  table.add_row({"avg_cited_refs", TextTable::num(stats.per_mode[1].avg_cited_refs, 2),
                 TextTable::num(stats.per_mode[0].avg_cited_refs, 2),
                 TextTable::num(stats.total.avg_cited_refs, 2)});
  table.add_row({"avg_cited_neigh",
                 TextTable::num(stats.per_mode[1].avg_citation_neighborhood, 2),
                 TextTable::num(stats.per_mode[0].avg_citation_neighborhood, 2),
                 TextTable::num(stats.total.avg_citation_neighborhood, 2)});
  std::cout << table.str();
  return 0;
}

// ---------------------------------------------------------------------------
// truncate-preview
// ---------------------------------------------------------------------------

int cmd_truncate_preview(const RunConfig& cfg, const std::string& paper_id) {
  auto loaded = corpus::load_corpus(cfg.corpus_path);
  corpus::CorpusIndex index(std::move(loaded.records));
  auto summaries = load_summaries(cfg.output_dir / "summaries" / "summaries.jsonl");

  auto hood = corpus::build_neighborhood(index, paper_id);
  std::vector<trajgen::SummaryEntry> entries;
  for (std::size_t i = 0; i < hood.cited.size(); ++i) {
    auto it = summaries.find(hood.cited[i].paper_id);
    if (it != summaries.end())
      entries.push_back({"R" + std::to_string(i + 1), it->second});
  }
  auto result = trajgen::truncate_context(entries, cfg.truncation);

  json kept = json::array();
  std::size_t kept_chars = 0;
  for (const auto& e : result.kept) {
    kept.push_back({{"marker", e.marker_id}, {"chars", e.summary.size()}});
    kept_chars += e.summary.size();
  }
  json out = {{"paper_id", paper_id},
              {"policy",
               {{"char_budget", cfg.truncation.char_budget},
                {"max_citations", cfg.truncation.max_citations}}},
              {"input_summaries", entries.size()},
              {"kept", kept},
              {"kept_chars", kept_chars},
              {"dropped_by_cap", result.report.dropped_by_cap},
              {"dropped_by_budget", result.report.dropped_by_budget},
              {"pruned_chars", result.report.pruned_chars}};
  write_json_file(cfg.output_dir / "truncate_preview" / (paper_id + ".json"), out);

  TextTable table({"marker", "kept_chars"});
  for (const auto& e : result.kept)
    table.add_row({e.marker_id, std::to_string(e.summary.size())});
  std::cout << table.str();
  std::cerr << "[truncate-preview] kept " << result.kept.size() << " summaries, "
            << result.report.pruned_chars << " chars pruned\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Citation-conditioned sensemaking trajectory pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string metric = "all";
  std::string backend = "heuristic";
  std::string agreement_metric = "interval";
  std::string paper_id;
  std::string teacher_dir, student_dir, ratings_file;
  std::string bundles_dir, candidates_dir, context_file, trajectories_dir, dataset_file;
  std::optional<std::size_t> limit;
  std::size_t min_citations = 1;
  std::optional<int> runs_override;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config,-c", config_path, "YAML run configuration")->required();
  };
  auto opt_path = [](const std::string& s) -> std::optional<fs::path> {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
  };

  auto* ingest = app.add_subcommand("ingest", "Load the corpus and assign splits");
  add_config(ingest);
  ingest->add_option("--limit", limit, "Process at most N records");

  auto* summarize = app.add_subcommand("summarize", "Summarize corpus papers");
  add_config(summarize);
  summarize->add_option("--limit", limit, "Process at most N records");

  auto* generate =
      app.add_subcommand("generate", "Generate trajectory bundles per citation set");
  add_config(generate);
  generate->add_option("--limit", limit, "Generate for at most N target papers");
  generate->add_option("--min-citations", min_citations,
                       "Minimum resolvable cited summaries per target");

  auto* diversity_cmd =
      app.add_subcommand("diversity", "Score bundle diversity metrics");
  add_config(diversity_cmd);
  diversity_cmd->add_option("--metric", metric,
                            "all|self_bleu|embedding|chunked_score|sentence_movers");
  diversity_cmd->add_option("--bundles", bundles_dir, "Bundle directory");
  diversity_cmd->add_option("--limit", limit, "Score at most N bundles");

  auto* rubric = app.add_subcommand("rubric", "LLM-as-judge rubric evaluation");
  add_config(rubric);
  rubric->add_option("--bundles", bundles_dir, "Bundle directory");
  rubric->add_option("--runs", runs_override, "Override the configured run count");
  rubric->add_option("--limit", limit, "Evaluate at most N bundles");

  auto* reward = app.add_subcommand("reward", "Grouped reward scoring");
  add_config(reward);
  reward->add_option("--bundles", bundles_dir, "Bundle directory");
  reward->add_option("--candidates", candidates_dir, "Directory of candidate .md files");
  reward->add_option("--context", context_file, "Context file for --candidates");
  reward->add_option("--limit", limit, "Score at most N bundles");

  auto* cite_stats =
      app.add_subcommand("cite-stats", "Citation-structure similarity reports");
  add_config(cite_stats);
  cite_stats->add_option("--teacher", teacher_dir, "Teacher trajectory directory")
      ->required();
  cite_stats->add_option("--student", student_dir, "Student trajectory directory")
      ->required();

  auto* agreement_cmd =
      app.add_subcommand("agreement", "Krippendorff alpha over rating matrices");
  add_config(agreement_cmd);
  agreement_cmd->add_option("--ratings", ratings_file, "CSV or JSON rating matrix")
      ->required();
  agreement_cmd->add_option("--metric", agreement_metric, "interval|ordinal|nominal");

  auto* stages = app.add_subcommand("stages", "Per-stage annotation frequencies");
  add_config(stages);
  stages->add_option("--trajectories", trajectories_dir,
                     "Directory of .md trajectories");
  stages->add_option("--bundles", bundles_dir, "Bundle directory");
  stages->add_option("--backend", backend, "heuristic|judge");
  stages->add_option("--limit", limit, "Annotate at most N bundles");

  auto* stats = app.add_subcommand("stats", "Dataset statistics report");
  add_config(stats);
  stats->add_option("--dataset", dataset_file, "dataset.jsonl path");

  auto* truncate_preview =
      app.add_subcommand("truncate-preview", "Preview the truncation policy");
  add_config(truncate_preview);
  truncate_preview->add_option("--paper", paper_id, "Target paper id")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = cli::load_config(config_path);
    fs::create_directories(cfg.output_dir);

    if (app.got_subcommand(ingest)) return cmd_ingest(cfg, limit);
    if (app.got_subcommand(summarize)) return cmd_summarize(cfg, limit);
    if (app.got_subcommand(generate)) return cmd_generate(cfg, limit, min_citations);
    if (app.got_subcommand(diversity_cmd))
      return cmd_diversity(cfg, metric, opt_path(bundles_dir), limit);
    if (app.got_subcommand(rubric))
      return cmd_rubric(cfg, opt_path(bundles_dir), runs_override, limit);
    if (app.got_subcommand(reward))
      return cmd_reward(cfg, opt_path(bundles_dir), opt_path(candidates_dir),
                        opt_path(context_file), limit);
    if (app.got_subcommand(cite_stats))
      return cmd_cite_stats(cfg, teacher_dir, student_dir);
    if (app.got_subcommand(agreement_cmd))
      return cmd_agreement(cfg, ratings_file, agreement_metric);
    if (app.got_subcommand(stages))
      return cmd_stages(cfg, opt_path(trajectories_dir), opt_path(bundles_dir),
                        backend, limit);
    if (app.got_subcommand(stats)) return cmd_stats(cfg, opt_path(dataset_file));
    if (app.got_subcommand(truncate_preview))
      return cmd_truncate_preview(cfg, paper_id);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const ReplayMissError& e) {
    std::cerr << "replay error: " << e.what() << "\n";
    return 4;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return 4;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 5;
  } catch (const NotFoundError& e) {
    std::cerr << "not found: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
