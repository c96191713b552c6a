#pragma once

// Centroid prefilter: keep documents whose embedding is close to the mean
// embedding of reference reasoning data and which fit the token budget.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rationale/backend.hpp"
#include "rationale/concurrency.hpp"

namespace rationale {

inline constexpr const char* kDefaultEmbedderModel = "microsoft/mpnet-base";

struct Document {
  std::string id;
  std::string text;
  std::string source;
  std::optional<std::size_t> token_count;  // resolved through the scorer when absent
};

inline Document document_from_json(const nlohmann::json& j) {
  Document d;
  d.id = j.at("id").get<std::string>();
  d.text = j.at("text").get<std::string>();
  d.source = j.value("source", "");
  if (j.contains("token_count")) d.token_count = j.at("token_count").get<std::size_t>();
  return d;
}

inline nlohmann::json to_json(const Document& d) {
  nlohmann::json j = {{"id", d.id}, {"text", d.text}, {"source", d.source}};
  if (d.token_count) j["token_count"] = *d.token_count;
  return j;
}

struct PrefilterConfig {
  double alpha = 0.3;
  std::size_t max_tokens = 2000;
  EmbeddingVector centroid;
  std::size_t jobs = 1;
};

inline EmbeddingVector mean_embedding(const std::vector<EmbeddingVector>& vs) {
  if (vs.empty()) throw Error(ErrorCode::EmptyReference, "centroid over zero vectors");
  EmbeddingVector out;
  out.values.assign(vs.front().dim(), 0.0);
  for (const auto& v : vs) {
    if (v.dim() != out.dim()) throw Error(ErrorCode::DimensionMismatch, "centroid inputs differ in dimension");
    for (std::size_t i = 0; i < v.dim(); ++i) out.values[i] += v.values[i];
  }
  for (auto& x : out.values) x /= static_cast<double>(vs.size());
  return out;
}

/// Element-wise mean of the reference texts' embeddings.
inline EmbeddingVector centroid(Gateway& gw, const std::vector<std::string>& reference_texts, std::size_t jobs = 1) {
  if (reference_texts.empty()) throw Error(ErrorCode::EmptyReference, "no reference texts");
  auto vs = parallel_map(reference_texts.size(), jobs, [&](std::size_t i) { return gw.embed(reference_texts[i]); });
  return mean_embedding(vs);
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::DimensionMismatch, "cosine of vectors with different dimensions");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine with an all-zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

struct ScoredDocument {
  Document doc;
  double similarity = 0.0;
};

inline nlohmann::json to_json(const ScoredDocument& d) {
  auto j = to_json(d.doc);
  j["similarity"] = d.similarity;
  return j;
}

struct SourceCounts {
  std::size_t seen = 0;
  std::size_t kept = 0;
  friend bool operator==(const SourceCounts&, const SourceCounts&) = default;
};

struct PrefilterReport {
  std::map<std::string, SourceCounts> sources;
  std::size_t errors = 0;

  void merge(const PrefilterReport& o) {
    for (const auto& [k, v] : o.sources) {
      sources[k].seen += v.seen;
      sources[k].kept += v.kept;
    }
    errors += o.errors;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : sources) j[k] = {{"seen", v.seen}, {"kept", v.kept}};
    return j;
  }
};

struct PrefilterResult {
  std::vector<ScoredDocument> kept;
  PrefilterReport report;
};

/// Keeps d iff token_count(d) <= max_tokens and cosine(embed(d), centroid) >= alpha.
/// Per-document embedding failures are logged to the gateway diagnostics and
/// the document is skipped. Kept documents preserve input order.
inline PrefilterResult prefilter(Gateway& gw, const std::vector<Document>& docs, const PrefilterConfig& cfg) {
  if (cfg.centroid.dim() == 0) throw Error(ErrorCode::EmptyReference, "prefilter: centroid not set");

  struct Outcome {
    std::optional<ScoredDocument> kept;
    PrefilterReport report;
  };

  auto outcomes = parallel_map(docs.size(), cfg.jobs, [&](std::size_t i) {
    const Document& d = docs[i];
    Outcome o;
    auto& counts = o.report.sources[d.source];
    counts.seen = 1;
    try {
      Document resolved = d;
      if (!resolved.token_count) resolved.token_count = gw.count_tokens(d.text);
      if (*resolved.token_count > cfg.max_tokens) return o;
      double sim = cosine(gw.embed(d.text), cfg.centroid);
      if (sim >= cfg.alpha) {
        counts.kept = 1;
        o.kept = ScoredDocument{std::move(resolved), sim};
      }
    } catch (const Error& e) {
      gw.diagnostics().warn("prefilter: skipped document '" + d.id + "': " + e.what());
      o.report.errors = 1;
    }
    return o;
  });

  PrefilterResult result;
  for (auto& o : outcomes) {
    result.report.merge(o.report);
    if (o.kept) result.kept.push_back(std::move(*o.kept));
  }
  return result;
}

}  // namespace rationale
