#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sensekit/errors.hpp"
#include "sensekit/hash.hpp"
#include "sensekit/llmio.hpp"
#include "sensekit/trajgen.hpp"

namespace sensekit::judge {

/// The eight rubric dimensions, in rubric order.
inline constexpr std::size_t kRubricSize = 8;
inline constexpr std::array<std::string_view, kRubricSize> kRubricDimensions = {
    "Novelty",     "Significance", "Grounding",   "Soundness",
    "Methodology", "Feasibility",  "Sensemaking", "Clarity",
};

// ---------------------------------------------------------------------------
// Score-tag parsing.
// ---------------------------------------------------------------------------

namespace detail {

// Parses "<open> [ws] digits [ws] </close>" starting at the tag occurrence;
// returns the integer or nullopt when structurally malformed.
inline std::optional<int> parse_tagged_int(std::string_view text, std::size_t open_end,
                                           std::string_view close_tag) {
  std::size_t i = open_end;
  while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' ||
                             text[i] == '\r'))
    ++i;
  std::size_t digits_begin = i;
  long value = 0;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
    value = value * 10 + (text[i] - '0');
    if (value > 1000000) return std::nullopt;
    ++i;
  }
  if (i == digits_begin) return std::nullopt;
  while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' ||
                             text[i] == '\r'))
    ++i;
  if (text.substr(i, close_tag.size()) != close_tag) return std::nullopt;
  return static_cast<int>(value);
}

}  // namespace detail

/// Extracts the first well-formed <score>k</score>. Multiple tags in one turn
/// are judge noise; the first one wins. An in-tag value outside 1..5 is a
/// parse error (the caller may retry the turn).
inline int parse_score_tag(std::string_view turn_text) {
  constexpr std::string_view kOpen = "<score>";
  constexpr std::string_view kClose = "</score>";
  std::size_t pos = 0;
  while ((pos = turn_text.find(kOpen, pos)) != std::string_view::npos) {
    if (auto value = detail::parse_tagged_int(turn_text, pos + kOpen.size(), kClose)) {
      if (*value < 1 || *value > 5)
        throw ParseError("score tag value out of range 1..5: " + std::to_string(*value));
      return *value;
    }
    pos += 1;
  }
  throw ParseError("no well-formed <score>N</score> tag in turn");
}

/// Extracts <score_i> for i = 1..expected_n, matched by index rather than
/// position. Every index must be present and in 1..5; the error names the
/// failing indices.
inline std::vector<int> parse_group_scores(std::string_view text,
                                           std::size_t expected_n) {
  if (expected_n < 1) throw ArgumentError("parse_group_scores: expected_n must be >= 1");
  std::vector<int> scores(expected_n, 0);
  std::vector<std::size_t> bad;
  for (std::size_t i = 1; i <= expected_n; ++i) {
    const std::string open = "<score_" + std::to_string(i) + ">";
    const std::string close = "</score_" + std::to_string(i) + ">";
    std::optional<int> found;
    std::size_t pos = 0;
    while ((pos = text.find(open, pos)) != std::string_view::npos) {
      if (auto value = detail::parse_tagged_int(text, pos + open.size(), close)) {
        found = value;
        break;
      }
      pos += 1;
    }
    if (!found || *found < 1 || *found > 5) {
      bad.push_back(i);
    } else {
      scores[i - 1] = *found;
    }
  }
  if (!bad.empty()) {
    std::string msg = "missing or invalid score tags for indices {";
    for (std::size_t i = 0; i < bad.size(); ++i) {
      if (i) msg += ", ";
      msg += std::to_string(bad[i]);
    }
    msg += "}";
    throw ParseError(msg);
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Rescaling and the composite-score algebra.
// ---------------------------------------------------------------------------

/// Linear rescale of a 1..5 score to [0, 1].
inline double rescale(int score) {
  if (score < 1 || score > 5)
    throw ArgumentError("rescale: score out of range 1..5: " + std::to_string(score));
  return static_cast<double>(score - 1) / 4.0;
}

struct DownstreamSubScores {
  // Executability dimensions: environment setup, data preparation,
  // experiment execution, paper generation.
  std::array<int, 4> exec_dims{};
  int plan_cov = 0;
  int cite_cov = 0;
  int bench_norm = 0;
  int repo_judge = 0;
  int paper_judge = 0;
};

struct CompositeScores {
  double exec = 0.0;
  double ground = 0.0;
  double utility = 0.0;
  double overall = 0.0;
};

/// Exec = mean of the four rescaled executability dimensions;
/// Ground = 0.5 PlanCov + 0.5 CiteCov; Utility = 0.50 BenchNorm +
/// 0.25 RepoJudge + 0.25 PaperJudge (all rescaled); Overall = 0.35 Exec +
/// 0.30 Ground + 0.35 Utility. The overall weights are applied as
/// (35 e + 30 g + 35 u)/100 so the all-ones and all-fives endpoints are
/// exactly 0 and 1.
inline CompositeScores composite_scores(const DownstreamSubScores& s) {
  CompositeScores out;
  out.exec = (rescale(s.exec_dims[0]) + rescale(s.exec_dims[1]) +
              rescale(s.exec_dims[2]) + rescale(s.exec_dims[3])) / 4.0;
  out.ground = 0.5 * rescale(s.plan_cov) + 0.5 * rescale(s.cite_cov);
  out.utility = 0.50 * rescale(s.bench_norm) + 0.25 * rescale(s.repo_judge) +
                0.25 * rescale(s.paper_judge);
  out.overall = (35.0 * out.exec + 30.0 * out.ground + 35.0 * out.utility) / 100.0;
  return out;
}

// ---------------------------------------------------------------------------
// Rubric score cards.
// ---------------------------------------------------------------------------

struct RubricScoreCard {
  std::array<int, kRubricSize> scores{};  // each 1..5, rubric order
  std::string run_id;
  std::string judge_id;
};

struct MeanCard {
  std::array<double, kRubricSize> means{};
  double overall = 0.0;  // mean of the eight dimension means
  std::size_t card_count = 0;
};

inline MeanCard aggregate_runs(const std::vector<RubricScoreCard>& cards) {
  if (cards.empty()) throw ArgumentError("aggregate_runs: no cards");
  MeanCard out;
  out.card_count = cards.size();
  for (std::size_t d = 0; d < kRubricSize; ++d) {
    long long sum = 0;  // integer accumulation: exactly permutation-invariant
    for (const auto& card : cards) sum += card.scores[d];
    out.means[d] = static_cast<double>(sum) / static_cast<double>(cards.size());
  }
  double acc = 0.0;
  for (double m : out.means) acc += m;
  out.overall = acc / static_cast<double>(kRubricSize);
  return out;
}

// ---------------------------------------------------------------------------
// Judge orchestration.
// ---------------------------------------------------------------------------

/// Multi-run protocol: runs >= 1, references shuffled per run, deterministic
/// given the seed.
struct JudgeRunPlan {
  int runs = 3;
  std::uint64_t seed = 0;

  void validate() const {
    if (runs < 1) throw ArgumentError("judge run plan: runs must be >= 1");
  }
};

struct ReferenceDoc {
  std::string marker_id;
  std::string synopsis;
};

struct RubricRunFailure {
  int run_index = 0;
  std::string reason;
};

struct RubricEvalResult {
  std::vector<RubricScoreCard> cards;       // one per successful run
  std::vector<RubricRunFailure> failures;   // failed runs, surfaced
};

inline llm::Sampling default_judge_sampling() {
  llm::Sampling s;
  s.temperature = 0.0;
  s.top_p = 1.0;
  s.max_tokens = 1024;
  return s;
}

namespace detail {

inline std::string references_block(const std::vector<ReferenceDoc>& refs) {
  std::string block;
  for (const auto& ref : refs)
    block += "[[" + ref.marker_id + "]] " + ref.synopsis + "\n\n";
  return block;
}

inline std::string rubric_turn_prompt(std::size_t item_index) {
  return "Rubric item " + std::to_string(item_index + 1) + " of 8: " +
         std::string(kRubricDimensions[item_index]) +
         ". Evaluate this item now and reply with the 1-5 score wrapped in "
         "<score></score> tags.";
}

inline constexpr std::string_view kScoreRetryNudge =
    "Your previous reply did not contain a valid <score>N</score> tag with N "
    "between 1 and 5. Repeat the evaluation of the current rubric item and "
    "reply with exactly one such tag.";

}  // namespace detail

/// Runs the turn protocol: one conversation per run, rubric items 1-8 in
/// order, one score tag per turn, one retry per failed turn. Reference
/// presentation order is shuffled per run (deterministic under the plan
/// seed). Failed runs are surfaced in the result, never silently dropped.
inline RubricEvalResult run_rubric_eval(llm::ProviderClient& provider,
                                        const trajgen::PromptTemplate& tmpl,
                                        const std::vector<ReferenceDoc>& refs,
                                        const std::string& proposal,
                                        const JudgeRunPlan& plan,
                                        const llm::Sampling& sampling =
                                            default_judge_sampling()) {
  plan.validate();
  if (!tmpl.has_slot("input_prompt") || !tmpl.has_slot("proposal"))
    throw ArgumentError("judge template must declare {{input_prompt}} and {{proposal}}");

  RubricEvalResult result;
  for (int run = 0; run < plan.runs; ++run) {
    std::vector<ReferenceDoc> shuffled = refs;
    deterministic_shuffle(shuffled, splitmix64(plan.seed) + static_cast<std::uint64_t>(run));
    const std::string opening = tmpl.render(
        {{"input_prompt", detail::references_block(shuffled)}, {"proposal", proposal}});

    std::vector<llm::Message> messages{{"user", opening}};
    RubricScoreCard card;
    card.run_id = "run-" + std::to_string(run);
    card.judge_id = provider.config().model;
    try {
      for (std::size_t item = 0; item < kRubricSize; ++item) {
        messages.push_back({"user", detail::rubric_turn_prompt(item)});
        std::string reply = provider.chat_complete(messages, sampling);
        int score;
        try {
          score = parse_score_tag(reply);
        } catch (const ParseError&) {
          // One retry per turn, then the run fails.
          messages.push_back({"assistant", reply});
          messages.push_back({"user", std::string(detail::kScoreRetryNudge)});
          reply = provider.chat_complete(messages, sampling);
          score = parse_score_tag(reply);
        }
        messages.push_back({"assistant", reply});
        card.scores[item] = score;
      }
      result.cards.push_back(std::move(card));
    } catch (const std::exception& e) {
      result.failures.push_back({run, e.what()});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Grouped reward scoring.
// ---------------------------------------------------------------------------

struct RewardContext {
  std::string input_prompt;  // cited-work context shown before the candidate
};

inline const std::vector<std::size_t>& default_reward_groups() {
  // Rubric order, grouped 3+3+2.
  static const std::vector<std::size_t> groups = {3, 3, 2};
  return groups;
}

struct GroupedRewardResult {
  double reward = 0.0;                    // mean of the eight item scores
  std::array<int, kRubricSize> scores{};  // per-item scores, rubric order
};

/// Scores the candidate against the eight rubric items in multi-turn groups
/// (default 3+3+2), parsing <score_i> tags per group with one retry. Any
/// group failing after its retry aborts the candidate: no partial rewards.
/// The reward is the arithmetic mean of all eight item scores.
inline GroupedRewardResult grouped_reward_scores(
    llm::ProviderClient& provider, const std::string& candidate,
    const RewardContext& context,
    const std::vector<std::size_t>& groups = default_reward_groups(),
    const llm::Sampling& sampling = default_judge_sampling()) {
  std::size_t total_items = 0;
  for (std::size_t g : groups) total_items += g;
  if (total_items != kRubricSize)
    throw ArgumentError("grouped_reward: group sizes must sum to 8");

  std::vector<llm::Message> messages;
  std::string header =
      "You are scoring a research trajectory against an 8-item rubric on a "
      "1-5 scale, a few items per turn.\n\nCONTEXT:\n" + context.input_prompt +
      "\nCANDIDATE TRAJECTORY:\n" + candidate + "\n";

  std::vector<int> all_scores;
  std::size_t item_cursor = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t group_size = groups[g];
    std::string ask = (g == 0 ? header : std::string());
    ask += "Score the following " + std::to_string(group_size) + " rubric items";
    for (std::size_t i = 0; i < group_size; ++i) {
      ask += (i == 0 ? ": " : ", ");
      ask += std::string(kRubricDimensions[item_cursor + i]);
    }
    ask += ". Reply with one tag per item, in order";
    for (std::size_t i = 1; i <= group_size; ++i)
      ask += (i == 1 ? ": " : " ") + std::string("<score_") + std::to_string(i) +
             ">N</score_" + std::to_string(i) + ">";
    ask += ".";

    messages.push_back({"user", ask});
    std::string reply = provider.chat_complete(messages, sampling);
    std::vector<int> scores;
    try {
      scores = parse_group_scores(reply, group_size);
    } catch (const ParseError&) {
      messages.push_back({"assistant", reply});
      messages.push_back(
          {"user",
           "Your previous reply was missing valid score tags. Reply again with "
           "exactly one <score_i>N</score_i> tag per item, N between 1 and 5."});
      reply = provider.chat_complete(messages, sampling);
      scores = parse_group_scores(reply, group_size);  // second failure aborts
    }
    messages.push_back({"assistant", reply});
    all_scores.insert(all_scores.end(), scores.begin(), scores.end());
    item_cursor += group_size;
  }

  GroupedRewardResult result;
  long long sum = 0;
  for (std::size_t i = 0; i < kRubricSize; ++i) {
    result.scores[i] = all_scores[i];
    sum += all_scores[i];
  }
  result.reward = static_cast<double>(sum) / 8.0;
  return result;
}

inline double grouped_reward(llm::ProviderClient& provider,
                             const std::string& candidate,
                             const RewardContext& context,
                             const std::vector<std::size_t>& groups =
                                 default_reward_groups(),
                             const llm::Sampling& sampling =
                                 default_judge_sampling()) {
  return grouped_reward_scores(provider, candidate, context, groups, sampling).reward;
}

}  // namespace sensekit::judge
