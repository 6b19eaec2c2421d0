#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sensekit/errors.hpp"
#include "sensekit/hash.hpp"
#include "sensekit/textproc.hpp"

namespace sensekit::llm {

using json = nlohmann::json;
using EmbeddingVector = std::vector<double>;

struct Message {
  std::string role;
  std::string content;
};

struct Sampling {
  double temperature = 0.7;
  double top_p = 0.95;
  int max_tokens = 4096;
  std::optional<std::uint64_t> seed;
};

enum class ProviderMode { Live, Record, Replay };

inline std::string_view provider_mode_name(ProviderMode m) {
  switch (m) {
    case ProviderMode::Live: return "live";
    case ProviderMode::Record: return "record";
    case ProviderMode::Replay: return "replay";
  }
  return "live";
}

/// Provider settings. Credentials are referenced by environment variable
/// name, never stored as literals.
struct ProviderConfig {
  std::string endpoint;     // e.g. "https://api.example.com" or "stub:"
  std::string api_key_env;  // name of the env var holding the credential
  std::string model;
  double timeout_s = 60.0;
  int max_retries = 3;
  int max_in_flight = 4;
  double backoff_base_s = 0.25;
  ProviderMode mode = ProviderMode::Live;
  std::filesystem::path transcript_path;
  std::size_t context_budget_tokens = 512;  // chunking budget for embeddings

  void validate() const {
    if (!(timeout_s > 0.0)) throw ArgumentError("provider: timeout must be > 0");
    if (max_retries < 0) throw ArgumentError("provider: max_retries must be >= 0");
    if (max_in_flight < 1) throw ArgumentError("provider: max_in_flight must be >= 1");
    if (mode != ProviderMode::Live && transcript_path.empty())
      throw ArgumentError("provider: record/replay modes need a transcript path");
  }
};

// ---------------------------------------------------------------------------
// Requests, digests, transcripts.
// ---------------------------------------------------------------------------

struct HttpRequest {
  std::string path;  // e.g. "/v1/chat/completions"
  json body;
};

/// Stable digest of the canonicalized request. nlohmann::json keeps object
/// keys sorted, so semantically equal requests digest identically regardless
/// of field order.
inline std::string request_digest(const HttpRequest& req) {
  json canonical;
  canonical["path"] = req.path;
  canonical["body"] = req.body;
  return to_hex(fnv1a64(canonical.dump()));
}

/// Recorded request/response pairs as line-delimited JSON
/// {digest, response, latency_ms}. Replay returns the recorded payload for a
/// digest byte-identically; unknown digests are a replay miss.
class Transcript {
 public:
  Transcript() = default;

  static Transcript load(const std::filesystem::path& path) {
    Transcript t;
    std::ifstream in(path);
    if (!in) throw IoError("cannot read transcript: " + path.string());
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
      ++line_number;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError("transcript " + path.string() + " line " +
                         std::to_string(line_number) + ": " + e.what());
      }
      // First occurrence wins, matching record-mode memoization.
      t.by_digest_.emplace(j.at("digest").get<std::string>(), j.at("response"));
    }
    return t;
  }

  const json* find(const std::string& digest) const {
    auto it = by_digest_.find(digest);
    return it == by_digest_.end() ? nullptr : &it->second;
  }

  bool insert(const std::string& digest, const json& response) {
    return by_digest_.emplace(digest, response).second;
  }

  std::size_t size() const { return by_digest_.size(); }

 private:
  std::unordered_map<std::string, json> by_digest_;
};

// ---------------------------------------------------------------------------
// Transports.
// ---------------------------------------------------------------------------

using Transport = std::function<json(const HttpRequest&)>;

inline Transport http_transport(const ProviderConfig& cfg) {
  std::string api_key;
  if (!cfg.api_key_env.empty()) {
    const char* v = std::getenv(cfg.api_key_env.c_str());
    if (!v) throw ArgumentError("credential env var not set: " + cfg.api_key_env);
    api_key = v;
  }
  auto client = std::make_shared<httplib::Client>(cfg.endpoint);
  const auto timeout = std::chrono::milliseconds(
      static_cast<long long>(cfg.timeout_s * 1000.0));
  client->set_connection_timeout(timeout);
  client->set_read_timeout(timeout);
  client->set_write_timeout(timeout);
  if (!api_key.empty()) client->set_bearer_token_auth(api_key);
  return [client](const HttpRequest& req) -> json {
    auto res = client->Post(req.path, req.body.dump(), "application/json");
    if (!res)
      throw TransportError("transport failure: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw TransportError("provider returned HTTP " + std::to_string(res->status));
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw ProviderContractError(std::string("provider sent invalid JSON: ") + e.what());
    }
  };
}

namespace detail {

inline double stub_unit(std::uint64_t seed) {
  return static_cast<double>(splitmix64(seed) >> 11) * (1.0 / 9007199254740992.0);
}

inline std::string stub_chat_content(const json& body, std::uint64_t digest) {
  std::string last_user;
  if (body.contains("messages")) {
    for (const auto& m : body["messages"]) {
      if (m.value("role", "") == "user") last_user = m.value("content", "");
    }
  }
  auto pick_score = [&](std::uint64_t salt) {
    return 1 + static_cast<int>(splitmix64(digest + salt) % 5);
  };

  // Grouped score tags requested? Emit one value per distinct <score_K>
  // mentioned in the instructions.
  std::vector<int> indices;
  for (std::size_t p = last_user.find("<score_"); p != std::string::npos;
       p = last_user.find("<score_", p + 1)) {
    std::size_t q = p + 7;
    int idx = 0;
    while (q < last_user.size() && std::isdigit(static_cast<unsigned char>(last_user[q])))
      idx = idx * 10 + (last_user[q++] - '0');
    if (idx > 0 && std::find(indices.begin(), indices.end(), idx) == indices.end())
      indices.push_back(idx);
  }
  if (!indices.empty()) {
    std::sort(indices.begin(), indices.end());
    std::string out = "Assessment follows.";
    for (int idx : indices) {
      out += " Item " + std::to_string(idx) + ": <score_" + std::to_string(idx) +
             ">" + std::to_string(pick_score(static_cast<std::uint64_t>(idx))) +
             "</score_" + std::to_string(idx) + ">.";
    }
    return out;
  }
  if (last_user.find("<score>") != std::string::npos) {
    return "After review, the rating is <score>" + std::to_string(pick_score(1)) +
           "</score>.";
  }

  // Section-labeling turns: answer "<i>: <StageName>" for each numbered
  // section in the request.
  if (last_user.find("<index>:") != std::string::npos) {
    std::size_t sections = 0;
    for (std::size_t i = 1; i < 64; ++i) {
      if (last_user.find("\n" + std::to_string(i) + ": ") != std::string::npos ||
          last_user.rfind(std::to_string(i) + ": ", 0) == 0) {
        sections = i;
      }
    }
    std::string out;
    for (std::size_t i = 1; i <= sections; ++i) {
      out += std::to_string(i) + ": " +
             std::string(text::kStageNames[splitmix64(digest + i) %
                                           text::kStageCount]) + "\n";
    }
    return out.empty() ? "1: Foraging\n" : out;
  }

  // Plan-shaped requests: a small stage-structured markdown plan citing
  // markers found in the prompt, varied by the request digest so distinct
  // seeds give distinct text. Checked before the synopsis cue because plan
  // prompts embed cited synopses.
  if (last_user.find("sensemaking") != std::string::npos ||
      last_user.find("Sensemaking") != std::string::npos) {
    auto markers = text::parse_citations(last_user);
    std::string out;
    for (std::size_t s = 0; s < text::kStageCount; ++s) {
      const auto name = std::string(text::kStageNames[s]);
      out += "## " + name + "\n";
      out += "Step notes w" + std::to_string(splitmix64(digest + 100 + s) % 997) +
             " v" + std::to_string(splitmix64(digest + 200 + s) % 997);
      if (!markers.empty()) {
        const auto& m = markers[s % markers.size()];
        out += " building on [[" + m.marker_id + "]]";
      }
      out += ". Risk r" + std::to_string(splitmix64(digest + 300 + s) % 89) +
             " remains open.\n\n";
    }
    return out;
  }
  if (last_user.find("synopsis") != std::string::npos ||
      last_user.find("Synopsis") != std::string::npos) {
    return "Synopsis " + to_hex(digest).substr(0, 8) +
           ": studies a focused problem, proposes method m" +
           std::to_string(splitmix64(digest + 7) % 97) +
           ", and reports consistent gains on standard benchmarks.";
  }
  return "Reply " + to_hex(digest).substr(0, 8) + ": " +
         last_user.substr(0, std::min<std::size_t>(last_user.size(), 120));
}

}  // namespace detail

/// Deterministic offline provider for dry runs and tests. Responses are pure
/// functions of the request: embeddings hash the input text, chat turns that
/// ask for <score>/<score_N> tags get valid tags, prompts mentioning
/// "synopsis" get a one-line summary, and anything else gets a small
/// stage-structured markdown plan.
inline Transport stub_transport() {
  return [](const HttpRequest& req) -> json {
    const std::uint64_t digest = fnv1a64(request_digest(req));
    if (req.path.find("/embeddings") != std::string::npos) {
      json data = json::array();
      const auto& input = req.body.at("input");
      const std::string model = req.body.value("model", "");
      for (std::size_t i = 0; i < input.size(); ++i) {
        // Content-addressed so a text embeds identically in any batch.
        const std::uint64_t seed =
            fnv1a64(input[i].get<std::string>()) ^ fnv1a64(model);
        std::vector<double> vec(16);
        for (std::size_t d = 0; d < vec.size(); ++d)
          vec[d] = detail::stub_unit(seed + d) * 2.0 - 1.0;
        data.push_back({{"index", i}, {"embedding", vec}});
      }
      return {{"object", "list"}, {"data", data}, {"model", model}};
    }
    if (req.path.find("/chat/completions") != std::string::npos) {
      json message = {{"role", "assistant"},
                      {"content", detail::stub_chat_content(req.body, digest)}};
      return {{"choices", json::array({{{"index", 0},
                                        {"message", message},
                                        {"finish_reason", "stop"}}})},
              {"model", req.body.value("model", "")}};
    }
    if (req.path.find("/pairwise_scores") != std::string::npos) {
      const auto& ga = req.body.at("group_a");
      const auto& gb = req.body.at("group_b");
      json rows = json::array();
      for (const auto& a : ga) {
        json row = json::array();
        for (const auto& b : gb) {
          // Commutative mix keeps the score symmetric in its arguments.
          const std::uint64_t s = fnv1a64(a.get<std::string>()) +
                                  fnv1a64(b.get<std::string>());
          row.push_back(detail::stub_unit(s));
        }
        rows.push_back(row);
      }
      return {{"scores", rows}};
    }
    throw ProviderContractError("stub transport: unknown path " + req.path);
  };
}

// ---------------------------------------------------------------------------
// Client.
// ---------------------------------------------------------------------------

/// Provider client with retry/backoff, an in-flight request bound, and
/// transcript record/replay. Safe to share across threads.
class ProviderClient {
 public:
  explicit ProviderClient(ProviderConfig cfg, Transport transport = {})
      : cfg_(std::move(cfg)),
        inflight_(std::make_unique<std::counting_semaphore<>>(cfg_.max_in_flight)) {
    cfg_.validate();
    if (cfg_.mode == ProviderMode::Replay) {
      transcript_ = Transcript::load(cfg_.transcript_path);
      return;
    }
    if (transport) {
      transport_ = std::move(transport);
    } else if (cfg_.endpoint.rfind("stub:", 0) == 0) {
      transport_ = stub_transport();
    } else {
      transport_ = http_transport(cfg_);
    }
    if (cfg_.mode == ProviderMode::Record) {
      if (!cfg_.transcript_path.parent_path().empty())
        std::filesystem::create_directories(cfg_.transcript_path.parent_path());
      if (std::filesystem::exists(cfg_.transcript_path))
        transcript_ = Transcript::load(cfg_.transcript_path);
      record_out_.open(cfg_.transcript_path, std::ios::app);
      if (!record_out_)
        throw IoError("cannot open transcript for append: " +
                      cfg_.transcript_path.string());
    }
  }

  const ProviderConfig& config() const { return cfg_; }

  std::string chat_complete(const std::vector<Message>& messages,
                            const Sampling& sampling) {
    if (messages.empty()) throw ArgumentError("chat_complete: no messages");
    HttpRequest req;
    req.path = "/v1/chat/completions";
    json msgs = json::array();
    for (const auto& m : messages)
      msgs.push_back({{"role", m.role}, {"content", m.content}});
    req.body = {{"model", cfg_.model},
                {"messages", msgs},
                {"temperature", sampling.temperature},
                {"top_p", sampling.top_p},
                {"max_tokens", sampling.max_tokens}};
    if (sampling.seed) req.body["seed"] = *sampling.seed;
    const json resp = perform(req);
    try {
      return resp.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw ProviderContractError("chat response missing choices[0].message.content");
    }
  }

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ArgumentError("embed: no texts");
    HttpRequest req;
    req.path = "/v1/embeddings";
    req.body = {{"model", cfg_.model}, {"input", texts}};
    const json resp = perform(req);
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<bool> seen(texts.size(), false);
    try {
      const auto& data = resp.at("data");
      if (data.size() != texts.size())
        throw ProviderContractError("embedding count mismatch");
      for (const auto& item : data) {
        const auto idx = item.at("index").get<std::size_t>();
        if (idx >= out.size() || seen[idx])
          throw ProviderContractError("embedding index out of range");
        out[idx] = item.at("embedding").get<EmbeddingVector>();
        seen[idx] = true;
      }
    } catch (const json::exception& e) {
      throw ProviderContractError(std::string("embedding response malformed: ") + e.what());
    }
    for (std::size_t i = 1; i < out.size(); ++i) {
      if (out[i].size() != out[0].size())
        throw ProviderContractError("embedding dimension mismatch within batch");
    }
    return out;
  }

  /// Pairwise chunk scores from an external scorer service.
  std::vector<double> pairwise_scores(const std::vector<std::string>& group_a,
                                      const std::vector<std::string>& group_b) {
    if (group_a.empty() || group_b.empty())
      throw ArgumentError("pairwise_scores: empty group");
    HttpRequest req;
    req.path = "/v1/pairwise_scores";
    req.body = {{"model", cfg_.model}, {"group_a", group_a}, {"group_b", group_b}};
    const json resp = perform(req);
    std::vector<double> flat;
    try {
      const auto& rows = resp.at("scores");
      if (rows.size() != group_a.size())
        throw ProviderContractError("score row count mismatch");
      for (const auto& row : rows) {
        if (row.size() != group_b.size())
          throw ProviderContractError("score column count mismatch");
        for (const auto& v : row) flat.push_back(v.get<double>());
      }
    } catch (const json::exception& e) {
      throw ProviderContractError(std::string("score response malformed: ") + e.what());
    }
    return flat;
  }

 private:
  struct SemaphoreGuard {
    std::counting_semaphore<>& sem;
    explicit SemaphoreGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
    ~SemaphoreGuard() { sem.release(); }
  };

  json perform(const HttpRequest& req) {
    const std::string digest = request_digest(req);
    if (cfg_.mode == ProviderMode::Replay) {
      const json* found = transcript_.find(digest);
      if (!found)
        throw ReplayMissError("replay miss: no transcript entry for digest " + digest);
      return *found;
    }
    if (cfg_.mode == ProviderMode::Record) {
      std::lock_guard<std::mutex> lock(record_mutex_);
      if (const json* found = transcript_.find(digest)) return *found;
    }

    SemaphoreGuard guard(*inflight_);
    TransportError last("unreachable", 0);
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) backoff(attempt);
      try {
        const auto t0 = std::chrono::steady_clock::now();
        json resp = transport_(req);
        const double latency_ms =
            std::chrono::duration<double, std::milli>(
                std::chrono::steady_clock::now() - t0).count();
        if (cfg_.mode == ProviderMode::Record) record(digest, resp, latency_ms);
        return resp;
      } catch (const TransportError& e) {
        last = TransportError(e.what(), attempt + 1);
      }
    }
    throw TransportError(std::string(last.what()) + " (after " +
                             std::to_string(cfg_.max_retries + 1) + " attempts)",
                         cfg_.max_retries + 1);
  }

  void backoff(int attempt) {
    const double base = cfg_.backoff_base_s * std::pow(2.0, attempt - 1);
    double jitter;
    {
      std::lock_guard<std::mutex> lock(rng_mutex_);
      jitter = std::uniform_real_distribution<double>(0.0, 0.25 * base)(rng_);
    }
    const double capped = std::min(base + jitter, 8.0);
    std::this_thread::sleep_for(std::chrono::duration<double>(capped));
  }

  void record(const std::string& digest, const json& resp, double latency_ms) {
    std::lock_guard<std::mutex> lock(record_mutex_);
    if (!transcript_.insert(digest, resp)) return;  // already memoized
    json line = {{"digest", digest}, {"response", resp}, {"latency_ms", latency_ms}};
    record_out_ << line.dump() << "\n";
    record_out_.flush();
  }

  ProviderConfig cfg_;
  Transport transport_;
  Transcript transcript_;
  std::ofstream record_out_;
  std::mutex record_mutex_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_{0x5eed5eedULL};
  std::unique_ptr<std::counting_semaphore<>> inflight_;
};

}  // namespace sensekit::llm
