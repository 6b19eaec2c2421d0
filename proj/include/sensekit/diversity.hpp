#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "sensekit/errors.hpp"
#include "sensekit/llmio.hpp"
#include "sensekit/ot.hpp"
#include "sensekit/textproc.hpp"

namespace sensekit::diversity {

enum class Condition { Infer, Target, None, Both };

inline std::string_view condition_name(Condition c) {
  switch (c) {
    case Condition::Infer: return "infer";
    case Condition::Target: return "target";
    case Condition::None: return "none";
    case Condition::Both: return "both";
  }
  return "none";
}

/// k sampled generations for one citation set. Pairwise metrics need k >= 2.
struct GenerationBundle {
  std::string prompt_id;
  std::vector<std::string> texts;
  Condition condition = Condition::None;

  std::size_t k() const { return texts.size(); }
};

// ---------------------------------------------------------------------------
// BLEU-4 and self-BLEU.
// ---------------------------------------------------------------------------

namespace detail {

inline std::unordered_map<std::string, std::size_t> ngram_counts(
    const std::vector<std::string>& tokens, std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key.append(tokens[i + k]);
    }
    ++counts[key];
  }
  return counts;
}

// Mean of the values accumulated in sorted order, so bundle statistics are
// independent of sample order down to the last bit.
inline double sorted_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace detail

/// Sentence-level BLEU with n = 1..4 and uniform weights. Counts are clipped
/// against the per-n-gram maximum over all references; the brevity penalty
/// uses the reference length closest to the hypothesis (ties to the shorter).
/// Orders for which the hypothesis has no n-grams are dropped and the uniform
/// weights renormalize over the remaining orders, so bleu4(t, {t}) == 1 for
/// any non-empty t. Zero precisions are smoothed to 1e-9.
inline double bleu4(const std::string& hypothesis,
                    const std::vector<std::string>& references) {
  if (references.empty()) throw ArgumentError("bleu4: references must be non-empty");
  const auto hyp = text::tokenize(hypothesis);
  if (hyp.empty()) return 0.0;

  std::vector<std::vector<std::string>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(text::tokenize(r));

  const auto hyp_len = static_cast<double>(hyp.size());
  double ref_len = static_cast<double>(refs[0].size());
  for (const auto& r : refs) {
    const auto len = static_cast<double>(r.size());
    const double best = std::abs(ref_len - hyp_len);
    const double cand = std::abs(len - hyp_len);
    if (cand < best || (cand == best && len < ref_len)) ref_len = len;
  }

  constexpr double kEpsilon = 1e-9;
  double log_sum = 0.0;
  int effective_orders = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto hyp_counts = detail::ngram_counts(hyp, n);
    if (hyp_counts.empty()) continue;
    ++effective_orders;
    std::unordered_map<std::string, std::size_t> max_ref;
    for (const auto& r : refs) {
      for (const auto& [gram, count] : detail::ngram_counts(r, n)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, count);
      }
    }
    std::size_t clipped = 0, total = 0;
    for (const auto& [gram, count] : hyp_counts) {
      total += count;
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) clipped += std::min(count, it->second);
    }
    double p = static_cast<double>(clipped) / static_cast<double>(total);
    if (p <= 0.0) p = kEpsilon;
    log_sum += std::log(p);
  }
  if (effective_orders == 0) return 0.0;
  const double geo = std::exp(log_sum / static_cast<double>(effective_orders));
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return bp * geo;
}

/// Each text in turn is the hypothesis against the remaining k-1 references;
/// the bundle similarity is the mean over the k choices.
inline double self_bleu_bundle(const GenerationBundle& bundle) {
  const std::size_t k = bundle.k();
  if (k < 2) throw ArgumentError("self_bleu_bundle: need k >= 2 texts");
  std::vector<double> scores;
  scores.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::string> refs;
    refs.reserve(k - 1);
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) refs.push_back(bundle.texts[j]);
    scores.push_back(bleu4(bundle.texts[i], refs));
  }
  return detail::sorted_mean(std::move(scores));
}

// ---------------------------------------------------------------------------
// Embedding-based similarity.
// ---------------------------------------------------------------------------

using EmbedFn =
    std::function<std::vector<llm::EmbeddingVector>(const std::vector<std::string>&)>;

inline EmbedFn embedder_of(llm::ProviderClient& client) {
  return [&client](const std::vector<std::string>& texts) { return client.embed(texts); };
}

/// Cosine similarity, clamped to [-1, 1]. Coincident vectors score exactly 1;
/// a zero-norm vector is an error rather than a silent 0 so provider faults
/// surface.
inline double cosine(const llm::EmbeddingVector& x, const llm::EmbeddingVector& y) {
  if (x.size() != y.size()) throw ArgumentError("cosine: dimension mismatch");
  if (x.empty()) throw ArgumentError("cosine: empty vectors");
  if (x == y) {
    double norm = 0.0;
    for (double v : x) norm += v * v;
    if (norm <= 0.0) throw DegenerateInputError("cosine: zero-norm vector");
    return 1.0;
  }
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx <= 0.0 || ny <= 0.0) throw DegenerateInputError("cosine: zero-norm vector");
  return std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), -1.0, 1.0);
}

/// Chunks the text under the provider context budget, embeds each chunk,
/// mean-pools and L2-normalizes.
inline llm::EmbeddingVector embed_document(const EmbedFn& embed,
                                           std::string_view doc_text,
                                           std::size_t context_budget_tokens) {
  if (doc_text.empty()) throw ArgumentError("embed_document: empty text");
  const auto doc = text::chunk(doc_text, context_budget_tokens);
  if (doc.empty()) throw ArgumentError("embed_document: text has no tokens");
  std::vector<std::string> chunk_texts;
  chunk_texts.reserve(doc.size());
  for (const auto& c : doc.chunks) chunk_texts.push_back(c.text);
  const auto vectors = embed(chunk_texts);
  if (vectors.size() != chunk_texts.size())
    throw ProviderContractError("embed_document: embedding count mismatch");

  llm::EmbeddingVector pooled(vectors[0].size(), 0.0);
  for (const auto& v : vectors)
    for (std::size_t d = 0; d < pooled.size(); ++d) pooled[d] += v[d];
  for (double& d : pooled) d /= static_cast<double>(vectors.size());
  double norm = 0.0;
  for (double d : pooled) norm += d * d;
  norm = std::sqrt(norm);
  if (norm < 1e-12)
    throw DegenerateInputError("embed_document: zero vector after pooling");
  for (double& d : pooled) d /= norm;
  return pooled;
}

inline llm::EmbeddingVector embed_document(llm::ProviderClient& client,
                                           std::string_view doc_text) {
  return embed_document(embedder_of(client), doc_text,
                        client.config().context_budget_tokens);
}

/// Mean pairwise cosine over the C(k,2) unordered pairs of document
/// embeddings.
inline double embedding_bundle_similarity(const GenerationBundle& bundle,
                                          const EmbedFn& embed,
                                          std::size_t context_budget_tokens) {
  const std::size_t k = bundle.k();
  if (k < 2) throw ArgumentError("embedding_bundle_similarity: need k >= 2 texts");
  std::vector<llm::EmbeddingVector> docs;
  docs.reserve(k);
  for (const auto& t : bundle.texts)
    docs.push_back(embed_document(embed, t, context_budget_tokens));
  std::vector<double> sims;
  sims.reserve(k * (k - 1) / 2);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) sims.push_back(cosine(docs[i], docs[j]));
  return detail::sorted_mean(std::move(sims));
}

// ---------------------------------------------------------------------------
// Chunked weighted-max similarity (BERTScore-style greedy matching at chunk
// granularity).
// ---------------------------------------------------------------------------

/// Pairwise chunk scorer contract: returns the m*n row-major similarity
/// matrix for (x chunks, y chunks). Scores must be symmetric in the text
/// pair, i.e. score(a, b) == score(b, a).
using ChunkScorer = std::function<std::vector<double>(
    const std::vector<std::string>&, const std::vector<std::string>&)>;

/// Chunk scorer backed by chunk-embedding cosine.
inline ChunkScorer cosine_chunk_scorer(const EmbedFn& embed) {
  return [embed](const std::vector<std::string>& a,
                 const std::vector<std::string>& b) {
    const auto ea = embed(a);
    const auto eb = embed(b);
    std::vector<double> scores;
    scores.reserve(ea.size() * eb.size());
    for (const auto& x : ea)
      for (const auto& y : eb) scores.push_back(cosine(x, y));
    return scores;
  };
}

/// Chunk scorer backed by an external scoring service over the provider wire
/// protocol.
inline ChunkScorer remote_chunk_scorer(llm::ProviderClient& client) {
  return [&client](const std::vector<std::string>& a,
                   const std::vector<std::string>& b) {
    return client.pairwise_scores(a, b);
  };
}

/// s(x -> y) = sum_i w_i max_j S_ij / sum_i w_i.
inline double directional_chunk_similarity(const std::vector<double>& scores,
                                           std::size_t m, std::size_t n,
                                           const std::vector<double>& weights) {
  if (m == 0 || n == 0 || scores.size() != m * n)
    throw ArgumentError("directional_chunk_similarity: bad matrix shape");
  if (weights.size() != m)
    throw ArgumentError("directional_chunk_similarity: weight size mismatch");
  double weight_sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ArgumentError("directional_chunk_similarity: negative weight");
    weight_sum += w;
  }
  if (weight_sum <= 0.0)
    throw ArgumentError("directional_chunk_similarity: weights are all zero");
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double row_max = scores[i * n];
    for (std::size_t j = 1; j < n; ++j) row_max = std::max(row_max, scores[i * n + j]);
    acc += weights[i] * row_max;
  }
  return acc / weight_sum;
}

/// Symmetric document similarity: the mean of the two directional values,
/// with token counts as chunk weights.
inline double symmetric_chunk_similarity(const text::ChunkedDoc& x,
                                         const text::ChunkedDoc& y,
                                         const ChunkScorer& scorer) {
  if (x.empty() || y.empty())
    throw ArgumentError("symmetric_chunk_similarity: empty document");
  std::vector<std::string> xt, yt;
  std::vector<double> xw, yw;
  for (const auto& c : x.chunks) {
    xt.push_back(c.text);
    xw.push_back(static_cast<double>(c.token_count));
  }
  for (const auto& c : y.chunks) {
    yt.push_back(c.text);
    yw.push_back(static_cast<double>(c.token_count));
  }
  const auto scores = scorer(xt, yt);
  const std::size_t m = xt.size(), n = yt.size();
  if (scores.size() != m * n)
    throw ProviderContractError("chunk scorer returned wrong matrix size");
  const double s_xy = directional_chunk_similarity(scores, m, n, xw);
  // Column direction over the same matrix.
  double weight_sum = 0.0, acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double col_max = scores[j];
    for (std::size_t i = 1; i < m; ++i) col_max = std::max(col_max, scores[i * n + j]);
    acc += yw[j] * col_max;
    weight_sum += yw[j];
  }
  const double s_yx = acc / weight_sum;
  return 0.5 * (s_xy + s_yx);
}

// ---------------------------------------------------------------------------
// Sentence Mover's Similarity (exact optimal transport over chunk
// embeddings).
// ---------------------------------------------------------------------------

inline double sentence_movers_similarity(const text::ChunkedDoc& x,
                                         const text::ChunkedDoc& y,
                                         const EmbedFn& embed) {
  if (x.empty() || y.empty())
    throw ArgumentError("sentence_movers_similarity: empty document");
  std::vector<std::string> xt, yt;
  for (const auto& c : x.chunks) xt.push_back(c.text);
  for (const auto& c : y.chunks) yt.push_back(c.text);
  const auto ex = embed(xt);
  const auto ey = embed(yt);

  ot::CostMatrix cost;
  cost.rows = ex.size();
  cost.cols = ey.size();
  cost.entries.reserve(cost.rows * cost.cols);
  for (const auto& cx : ex)
    for (const auto& cy : ey) cost.entries.push_back(1.0 - cosine(cx, cy));
  cost.row_marginal = x.weights;
  cost.col_marginal = y.weights;
  return 1.0 - ot::ot_cost(cost);
}

// ---------------------------------------------------------------------------
// Diversity reports.
// ---------------------------------------------------------------------------

enum class Metric { SelfBleu, Embedding, ChunkedScore, SentenceMovers };

inline std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::SelfBleu: return "self_bleu";
    case Metric::Embedding: return "embedding";
    case Metric::ChunkedScore: return "chunked_score";
    case Metric::SentenceMovers: return "sentence_movers";
  }
  return "self_bleu";
}

/// Backends for the provider-dependent metrics. chunk_budget_tokens is the
/// sentence-chunking budget for ChunkedScore and SentenceMovers; scorer, when
/// absent, defaults to chunk-embedding cosine.
struct DiversityBackend {
  EmbedFn embed;
  ChunkScorer scorer;
  std::size_t embed_context_budget = 512;
  std::size_t chunk_budget_tokens = 64;
};

inline double bundle_similarity(const GenerationBundle& bundle, Metric metric,
                                const DiversityBackend& backend) {
  const std::size_t k = bundle.k();
  if (k < 2) throw ArgumentError("bundle_similarity: need k >= 2 texts");
  switch (metric) {
    case Metric::SelfBleu:
      return self_bleu_bundle(bundle);
    case Metric::Embedding:
      if (!backend.embed) throw ArgumentError("embedding metric needs an embedder");
      return embedding_bundle_similarity(bundle, backend.embed,
                                         backend.embed_context_budget);
    case Metric::ChunkedScore: {
      ChunkScorer scorer = backend.scorer;
      if (!scorer) {
        if (!backend.embed)
          throw ArgumentError("chunked-score metric needs a scorer or embedder");
        scorer = cosine_chunk_scorer(backend.embed);
      }
      std::vector<text::ChunkedDoc> docs;
      docs.reserve(k);
      for (const auto& t : bundle.texts)
        docs.push_back(text::chunk(t, backend.chunk_budget_tokens));
      std::vector<double> sims;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
          sims.push_back(symmetric_chunk_similarity(docs[i], docs[j], scorer));
      return detail::sorted_mean(std::move(sims));
    }
    case Metric::SentenceMovers: {
      if (!backend.embed)
        throw ArgumentError("sentence-movers metric needs an embedder");
      std::vector<text::ChunkedDoc> docs;
      docs.reserve(k);
      for (const auto& t : bundle.texts)
        docs.push_back(text::chunk(t, backend.chunk_budget_tokens));
      std::vector<double> sims;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
          sims.push_back(sentence_movers_similarity(docs[i], docs[j], backend.embed));
      return detail::sorted_mean(std::move(sims));
    }
  }
  throw ArgumentError("bundle_similarity: unknown metric");
}

struct BundleScore {
  std::string prompt_id;
  Condition condition;
  double similarity;
};

struct DiversityReport {
  Metric metric = Metric::SelfBleu;
  std::vector<BundleScore> bundles;
  std::map<Condition, double> diversity;  // D^(k) = 1 - mean bundle similarity
  double overall = 0.0;                   // mean of the per-condition values
  double similarity_min = 0.0;            // theoretical range of a bundle score
  double similarity_max = 1.0;
};

inline DiversityReport diversity_report(const std::vector<GenerationBundle>& bundles,
                                        Metric metric,
                                        const DiversityBackend& backend = {}) {
  if (bundles.empty()) throw ArgumentError("diversity_report: no bundles");
  DiversityReport report;
  report.metric = metric;
  // BLEU similarities live in [0,1]; cosine-based ones in [-1,1], so the
  // diversity values may reach 2 and the report records the range.
  if (metric != Metric::SelfBleu) report.similarity_min = -1.0;

  std::map<Condition, std::vector<double>> by_condition;
  for (const auto& bundle : bundles) {
    const double sim = bundle_similarity(bundle, metric, backend);
    report.bundles.push_back({bundle.prompt_id, bundle.condition, sim});
    by_condition[bundle.condition].push_back(sim);
  }
  double acc = 0.0;
  for (auto& [condition, sims] : by_condition) {
    const double d = 1.0 - detail::sorted_mean(std::move(sims));
    report.diversity[condition] = d;
    acc += d;
  }
  report.overall = acc / static_cast<double>(report.diversity.size());
  return report;
}

}  // namespace sensekit::diversity
