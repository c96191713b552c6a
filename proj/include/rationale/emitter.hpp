#pragma once

// Training-pair emission: kept candidates become (context -> rationale)
// examples for fine-tuning the rationale generator.

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rationale/extractor.hpp"
#include "rationale/filter.hpp"

namespace rationale {

struct TrainingExample {
  std::string context;
  std::string target;
  Origin origin = Origin::Corpus;
  std::string source_id;
  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

inline nlohmann::json to_json(const TrainingExample& e) {
  return {{"context", e.context}, {"target", e.target}, {"origin", to_string(e.origin)}, {"source_id", e.source_id}};
}

inline TrainingExample example_from_json(const nlohmann::json& j) {
  return {j.at("context").get<std::string>(), j.at("target").get<std::string>(),
          origin_from_string(j.at("origin").get<std::string>()), j.at("source_id").get<std::string>()};
}

struct EmitOptions {
  /// Left-truncate contexts to this many scorer tokens, dropping whole
  /// leading words. Unset means no truncation.
  std::optional<std::size_t> max_context_tokens;
  std::function<std::size_t(std::string_view)> count_tokens;
};

struct EmitReport {
  std::size_t kept = 0;
  std::size_t duplicates = 0;
  std::size_t leaked = 0;  // QA targets that state the gold answer; never emitted
  std::size_t emitted = 0;

  bool conserved() const { return emitted + duplicates + leaked == kept; }

  nlohmann::json to_json() const {
    return {{"kept", kept}, {"duplicates", duplicates}, {"leaked", leaked}, {"emitted", emitted}};
  }
};

struct EmitResult {
  std::vector<TrainingExample> examples;
  EmitReport report;
};

inline std::string truncate_left(const std::string& context, std::size_t budget,
                                 const std::function<std::size_t(std::string_view)>& count) {
  if (count(context) <= budget) return context;
  auto spans = text::word_spans(context);
  // binary search for the fewest dropped leading words that fit
  std::size_t lo = 1, hi = spans.size();
  while (lo < hi) {
    std::size_t mid = (lo + hi) / 2;
    if (count(std::string_view(context).substr(spans[mid].begin)) <= budget)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo < spans.size() ? context.substr(spans[lo].begin) : std::string();
}

/// One example per kept candidate in (source_id, position) order, with
/// duplicate (context, target) pairs emitted once.
inline EmitResult emit(std::vector<RationaleCandidate> kept, const EmitOptions& opts = {}) {
  canonical_sort(kept);
  EmitResult out;
  out.report.kept = kept.size();
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& c : kept) {
    if (c.origin == Origin::QADataset && contains_answer(c.rationale, c.gold_final)) {
      ++out.report.leaked;
      continue;
    }
    TrainingExample e{c.preceding, c.rationale, c.origin, c.source_id};
    if (opts.max_context_tokens && opts.count_tokens)
      e.context = truncate_left(e.context, *opts.max_context_tokens, opts.count_tokens);
    if (!seen.emplace(e.context, e.target).second) {
      ++out.report.duplicates;
      continue;
    }
    out.examples.push_back(std::move(e));
  }
  out.report.emitted = out.examples.size();
  return out;
}

struct SourceTally {
  std::string source;
  std::size_t docs = 0;
  std::size_t before = 0;
  std::size_t after = 0;
  std::optional<double> tau_f;
};

/// Statistics rows from raw per-source counts of one pipeline run.
inline FilterReport stats(const std::vector<SourceTally>& tallies) {
  FilterReport r;
  for (const auto& t : tallies) r.rows.push_back({t.source, t.docs, t.before, t.after, t.tau_f});
  return r;
}

/// Counts per source from candidate lists before and after filtering; docs
/// counts distinct doc_id values among the pre-filter candidates unless
/// `docs_by_source` supplies them.
inline FilterReport stats(const std::vector<RationaleCandidate>& before, const std::vector<RationaleCandidate>& after,
                          const std::map<std::string, std::size_t>& docs_by_source = {},
                          const std::map<std::string, double>& tau_by_source = {}) {
  std::map<std::string, SourceTally> t;
  std::map<std::string, std::set<std::string>> docs;
  for (const auto& c : before) {
    t[c.source].before++;
    docs[c.source].insert(c.doc_id);
  }
  for (const auto& c : after) t[c.source].after++;
  for (const auto& [src, n] : docs_by_source) t[src];
  std::vector<SourceTally> rows;
  for (auto& [src, tally] : t) {
    tally.source = src;
    auto d = docs_by_source.find(src);
    tally.docs = d != docs_by_source.end() ? d->second : docs[src].size();
    if (auto it = tau_by_source.find(src); it != tau_by_source.end()) tally.tau_f = it->second;
    rows.push_back(tally);
  }
  return stats(rows);
}

}  // namespace rationale
