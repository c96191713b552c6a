#pragma once

// Rationale extraction. The extractor model is asked to copy its input with
// <BOT>rationale<EOT> spans inserted; each well-formed span is anchored back
// to a sentence (corpus) or step (QA) boundary of the original text, so a
// candidate's preceding and following fields always tile the source exactly.

#include <algorithm>
#include <cctype>
#include <iterator>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "rationale/backend.hpp"
#include "rationale/concurrency.hpp"
#include "rationale/prefilter.hpp"
#include "rationale/template.hpp"
#include "rationale/text.hpp"

namespace rationale {

inline constexpr std::string_view kBeginRationale = "<BOT>";
inline constexpr std::string_view kEndRationale = "<EOT>";

struct Segment {
  std::string doc_id;
  std::string source;
  std::string text;
  std::size_t word_count = 0;
  int index_in_doc = 0;
};

/// Greedy packing of whole sentences up to `max_words` words. A sentence
/// longer than the limit is hard-split at word boundaries. Segments tile the
/// document text in order.
inline std::vector<Segment> segment(const Document& doc, std::size_t max_words = 2000) {
  std::vector<Segment> out;
  if (max_words == 0) throw Error(ErrorCode::PreconditionViolation, "segment: max_words must be positive");
  const std::string& t = doc.text;
  if (text::word_count(t) == 0) return out;

  std::size_t cur_begin = 0;
  std::size_t cur_words = 0;
  auto emit = [&](std::size_t end) {
    out.push_back({doc.id, doc.source, t.substr(cur_begin, end - cur_begin), cur_words, static_cast<int>(out.size())});
    cur_begin = end;
    cur_words = 0;
  };

  for (const auto& s : text::split_sentences(t)) {
    auto ws = text::word_spans(std::string_view(t).substr(s.begin, s.end - s.begin));
    std::size_t w = ws.size();
    if (w > max_words) {
      if (cur_words > 0) emit(s.begin);
      std::size_t taken = 0;
      while (w - taken > max_words) {
        taken += max_words;
        cur_words = max_words;
        emit(s.begin + ws[taken].begin);
      }
      cur_words = w - taken;
    } else if (cur_words + w > max_words) {
      emit(s.begin);
      cur_words = w;
    } else {
      cur_words += w;
    }
  }
  if (cur_begin < t.size()) {
    if (cur_words == 0 && !out.empty()) {
      out.back().text += t.substr(cur_begin);
    } else {
      emit(t.size());
    }
  }
  return out;
}

struct QAPair {
  std::string id;
  std::string question;
  std::string answer;
  std::string gold_final;
  std::string dataset;
};

/// Final answer of a worked solution: a "#### X" line, else the text after
/// "The final answer is:", else the last number.
inline std::string derive_gold_final(std::string_view answer) {
  if (auto p = answer.rfind("####"); p != std::string_view::npos) {
    auto rest = text::trim(answer.substr(p + 4));
    auto nl = rest.find('\n');
    return std::string(text::trim(rest.substr(0, nl)));
  }
  constexpr std::string_view kCue = "The final answer is:";
  if (auto p = answer.rfind(kCue); p != std::string_view::npos) {
    auto rest = text::trim(answer.substr(p + kCue.size()));
    auto nl = rest.find('\n');
    auto v = text::trim(rest.substr(0, nl));
    while (!v.empty() && v.back() == '.') v.remove_suffix(1);
    return std::string(v);
  }
  auto spans = text::word_spans(answer);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    auto nums = text::numbers_in(answer.substr(it->begin, it->size()));
    if (!nums.empty()) {
      // return the raw run so the substring invariant holds
      auto w = answer.substr(it->begin, it->size());
      std::size_t b = 0;
      while (b < w.size() && !text::is_digit(w[b]) && w[b] != '-') ++b;
      std::size_t e = b;
      while (e < w.size() && (text::is_digit(w[e]) || w[e] == ',' || w[e] == '.' || w[e] == '-')) ++e;
      auto raw = w.substr(b, e - b);
      while (!raw.empty() && (raw.back() == '.' || raw.back() == ',')) raw.remove_suffix(1);
      return std::string(raw);
    }
  }
  return {};
}

inline QAPair qa_pair_from_json(const nlohmann::json& j) {
  QAPair p;
  p.id = j.at("id").get<std::string>();
  p.question = j.at("question").get<std::string>();
  p.answer = j.at("answer").get<std::string>();
  p.dataset = j.value("dataset", "");
  p.gold_final = j.contains("gold_final") ? j.at("gold_final").get<std::string>() : derive_gold_final(p.answer);
  if (p.gold_final.empty()) throw Error(ErrorCode::SchemaError, "QA pair '" + p.id + "' has no final answer");
  if (p.answer.find(p.gold_final) == std::string::npos)
    throw Error(ErrorCode::SchemaError, "QA pair '" + p.id + "': gold_final is not a substring of answer");
  return p;
}

/// True when `rationale` states `gold`. Numeric answers compare every number
/// in the rationale after normalization; other answers match as a
/// case-insensitive whole-word phrase.
inline bool contains_answer(std::string_view rationale, std::string_view gold) {
  if (text::trim(gold).empty()) return false;
  if (text::is_numeric(gold)) {
    auto target = text::normalize_number(gold);
    for (const auto& n : text::numbers_in(rationale))
      if (n == target) return true;
    return false;
  }
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  auto g = text::trim(gold);
  if (g.size() >= 3 && g.front() == '(' && g.back() == ')') g = text::trim(g.substr(1, g.size() - 2));
  if (g.size() == 1 && std::isupper(static_cast<unsigned char>(g[0]))) {
    // Choice letter: "A" is also an article, so only a letter that is not
    // followed by another word counts ("(A)", "A)", "is A.").
    for (std::size_t p = rationale.find(g[0]); p != std::string_view::npos; p = rationale.find(g[0], p + 1)) {
      if (p > 0 && is_word(rationale[p - 1])) continue;
      std::size_t q = p + 1;
      if (q < rationale.size() && rationale[q] == ')') return true;
      while (q < rationale.size() && rationale[q] == ' ') ++q;
      if (q >= rationale.size() || !is_word(rationale[q])) return true;
    }
    return false;
  }
  auto hay = text::to_lower(text::collapse_whitespace(rationale));
  auto needle = text::to_lower(text::collapse_whitespace(gold));
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) {
    bool left = p == 0 || !is_word(hay[p - 1]);
    bool right = p + needle.size() >= hay.size() || !is_word(hay[p + needle.size()]);
    if (left && right) return true;
  }
  return false;
}

enum class Origin { Corpus, QADataset };

constexpr std::string_view to_string(Origin o) { return o == Origin::Corpus ? "corpus" : "qa"; }

inline Origin origin_from_string(std::string_view s) {
  if (s == "corpus") return Origin::Corpus;
  if (s == "qa") return Origin::QADataset;
  throw Error(ErrorCode::SchemaError, "unknown origin '" + std::string(s) + "'");
}

struct RationaleCandidate {
  std::string source_id;
  std::size_t position = 0;
  std::string preceding;
  std::string rationale;
  std::string following;
  Origin origin = Origin::Corpus;
  std::string source;      // dataset or corpus subdomain tag
  std::string doc_id;      // document (or QA pair) the source segment came from
  std::string gold_final;  // QA origin only

  std::string id() const {
    return source_id + "@" + std::to_string(position) + "#" + text::hex64(text::fnv1a64(rationale)).substr(0, 8);
  }
};

inline nlohmann::json to_json(const RationaleCandidate& c) {
  nlohmann::json j = {{"source_id", c.source_id}, {"position", c.position},     {"preceding", c.preceding},
                      {"rationale", c.rationale}, {"following", c.following},   {"origin", to_string(c.origin)},
                      {"source", c.source},       {"doc_id", c.doc_id}};
  if (c.origin == Origin::QADataset) j["gold_final"] = c.gold_final;
  return j;
}

inline RationaleCandidate candidate_from_json(const nlohmann::json& j) {
  RationaleCandidate c;
  c.source_id = j.at("source_id").get<std::string>();
  c.position = j.at("position").get<std::size_t>();
  c.preceding = j.at("preceding").get<std::string>();
  c.rationale = j.at("rationale").get<std::string>();
  c.following = j.at("following").get<std::string>();
  c.origin = origin_from_string(j.at("origin").get<std::string>());
  c.source = j.value("source", "");
  c.doc_id = j.value("doc_id", c.source_id);
  c.gold_final = j.value("gold_final", "");
  return c;
}

inline void canonical_sort(std::vector<RationaleCandidate>& cs) {
  std::stable_sort(cs.begin(), cs.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source_id, a.position, a.rationale) < std::tie(b.source_id, b.position, b.rationale);
  });
}

struct ExtractionStats {
  std::size_t completions = 0;
  std::size_t parse_failures = 0;  // completions with unbalanced or nested markers
  std::size_t spans = 0;
  std::size_t kept = 0;
  std::size_t malformed = 0;  // empty body, unanchored, or inside a failed completion
  std::size_t leaked = 0;

  void merge(const ExtractionStats& o) {
    completions += o.completions;
    parse_failures += o.parse_failures;
    spans += o.spans;
    kept += o.kept;
    malformed += o.malformed;
    leaked += o.leaked;
  }

  nlohmann::json to_json() const {
    return {{"completions", completions}, {"parse_failures", parse_failures}, {"spans", spans},
            {"kept", kept},               {"malformed", malformed},           {"leaked", leaked}};
  }
};

struct ExtractionResult {
  std::vector<RationaleCandidate> candidates;
  ExtractionStats stats;
};

struct ExtractOptions {
  int num_samples = 1;
  double temperature = 0.7;
  int top_k = 3;
  int max_tokens = 4096;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

namespace detail {

struct MarkedSpan {
  std::string body;
  std::size_t lead_words = 0;   // words of unmarked text before the span
  std::string last_lead_word;   // last of those words, for the rewrite check
};

struct MarkedParse {
  bool well_formed = true;
  std::size_t bot_markers = 0;
  std::vector<MarkedSpan> spans;
};

inline MarkedParse parse_marked(std::string_view completion) {
  MarkedParse r;
  std::string stripped;
  std::size_t i = 0;
  bool open = false;
  std::string body;
  while (i < completion.size()) {
    if (completion.substr(i).starts_with(kBeginRationale)) {
      ++r.bot_markers;
      if (open) r.well_formed = false;
      open = true;
      body.clear();
      i += kBeginRationale.size();
    } else if (completion.substr(i).starts_with(kEndRationale)) {
      if (!open) {
        r.well_formed = false;
      } else {
        auto ws = text::words(stripped);
        r.spans.push_back({std::string(text::trim(body)), ws.size(), ws.empty() ? std::string() : ws.back()});
      }
      open = false;
      i += kEndRationale.size();
    } else {
      (open ? body : stripped).push_back(completion[i]);
      ++i;
    }
  }
  if (open) r.well_formed = false;
  return r;
}

struct Boundary {
  std::size_t position;    // index reported on the candidate
  std::size_t offset;      // split point in the source text
  std::size_t words_before;
};

/// Turns the spans of one completion into candidates against `source_text`.
inline void anchor_spans(const MarkedParse& parsed, const std::string& source_text,
                         const std::vector<std::string>& source_words, const std::vector<Boundary>& boundaries,
                         const RationaleCandidate& proto, ExtractionResult& out,
                         const std::string* gold = nullptr) {
  auto& st = out.stats;
  ++st.completions;
  if (!parsed.well_formed) {
    ++st.parse_failures;
    std::size_t n = std::max<std::size_t>(1, parsed.bot_markers);
    st.spans += n;
    st.malformed += n;
    return;
  }
  for (const auto& span : parsed.spans) {
    ++st.spans;
    if (span.body.empty()) {
      ++st.malformed;
      continue;
    }
    auto it = std::find_if(boundaries.begin(), boundaries.end(),
                           [&](const Boundary& b) { return b.words_before == span.lead_words; });
    if (it == boundaries.end() || span.lead_words == 0 || source_words[span.lead_words - 1] != span.last_lead_word) {
      ++st.malformed;
      continue;
    }
    if (gold && contains_answer(span.body, *gold)) {
      ++st.leaked;
      continue;
    }
    RationaleCandidate c = proto;
    c.position = it->position;
    c.preceding = source_text.substr(0, it->offset);
    c.following = source_text.substr(it->offset);
    c.rationale = span.body;
    out.candidates.push_back(std::move(c));
    ++st.kept;
  }
}

}  // namespace detail

/// One prompt per segment; candidates sit at sentence boundaries that have
/// text after them.
inline ExtractionResult extract_from_corpus(Gateway& gw, const Segment& seg, const PromptTemplate& tpl,
                                            const ExtractOptions& opts = {}) {
  GenerationRequest req;
  req.prompt = tpl.render({{"context", seg.text}});
  req.num_samples = opts.num_samples;
  req.temperature = opts.temperature;
  req.top_k = opts.top_k;
  req.max_tokens = opts.max_tokens;
  req.seed = opts.seed;

  ExtractionResult out;
  std::vector<std::string> completions;
  try {
    completions = gw.generate(req, Role::Extractor);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyCompletion) throw;
    out.stats.completions += static_cast<std::size_t>(opts.num_samples);
    return out;
  }

  auto sentences = text::split_sentences(seg.text);
  std::vector<detail::Boundary> boundaries;
  std::size_t words_before = 0;
  for (std::size_t k = 0; k < sentences.size(); ++k) {
    words_before += text::word_count(std::string_view(seg.text).substr(sentences[k].begin, sentences[k].end - sentences[k].begin));
    if (k + 1 < sentences.size()) boundaries.push_back({k + 1, sentences[k].end, words_before});
  }
  auto source_words = text::words(seg.text);

  RationaleCandidate proto;
  proto.source_id = seg.doc_id + "#" + std::to_string(seg.index_in_doc);
  proto.origin = Origin::Corpus;
  proto.source = seg.source;
  proto.doc_id = seg.doc_id;
  for (const auto& c : completions)
    detail::anchor_spans(detail::parse_marked(c), seg.text, source_words, boundaries, proto, out);
  canonical_sort(out.candidates);
  return out;
}

/// Reasoning steps of an answer as byte ranges: non-blank lines when there
/// are at least two, otherwise sentences.
inline std::vector<text::Span> answer_steps(std::string_view answer) {
  std::vector<text::Span> lines;
  std::size_t b = 0;
  while (b < answer.size()) {
    auto nl = answer.find('\n', b);
    std::size_t e = nl == std::string_view::npos ? answer.size() : nl;
    if (!text::trim(answer.substr(b, e - b)).empty()) lines.push_back({b, e});
    b = e + 1;
  }
  if (lines.size() >= 2) return lines;
  std::vector<text::Span> out;
  for (const auto& s : text::split_sentences(answer))
    if (!text::trim(answer.substr(s.begin, s.end - s.begin)).empty()) out.push_back({s.begin, s.content_end});
  return out;
}

/// Source text of a QA candidate is question + "\n" + answer; candidates sit
/// at the start of steps 1..n-1. Rationales stating the gold answer are
/// discarded and counted as leaked.
inline ExtractionResult extract_from_qa(Gateway& gw, const QAPair& pair, const PromptTemplate& tpl,
                                        const ExtractOptions& opts = {}) {
  ExtractionResult out;
  auto steps = answer_steps(pair.answer);
  if (steps.size() < 2) return out;

  GenerationRequest req;
  req.prompt = tpl.render({{"question", pair.question}, {"answer", pair.answer}});
  req.num_samples = opts.num_samples;
  req.temperature = opts.temperature;
  req.top_k = opts.top_k;
  req.max_tokens = opts.max_tokens;
  req.seed = opts.seed;

  std::vector<std::string> completions;
  try {
    completions = gw.generate(req, Role::Extractor);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyCompletion) throw;
    out.stats.completions += static_cast<std::size_t>(opts.num_samples);
    return out;
  }

  const std::string source_text = pair.question + "\n" + pair.answer;
  const std::size_t base = pair.question.size() + 1;
  std::vector<detail::Boundary> boundaries;
  for (std::size_t k = 1; k < steps.size(); ++k) {
    std::size_t wb = text::word_count(std::string_view(pair.answer).substr(0, steps[k].begin));
    boundaries.push_back({k, base + steps[k].begin, wb});
  }
  auto answer_words = text::words(pair.answer);

  RationaleCandidate proto;
  proto.source_id = pair.id;
  proto.origin = Origin::QADataset;
  proto.source = pair.dataset;
  proto.doc_id = pair.id;
  proto.gold_final = pair.gold_final;
  for (const auto& c : completions)
    detail::anchor_spans(detail::parse_marked(c), source_text, answer_words, boundaries, proto, out, &pair.gold_final);
  canonical_sort(out.candidates);
  return out;
}

inline ExtractionResult merge_results(std::vector<ExtractionResult>&& parts) {
  ExtractionResult all;
  for (auto& p : parts) {
    all.stats.merge(p.stats);
    std::move(p.candidates.begin(), p.candidates.end(), std::back_inserter(all.candidates));
  }
  canonical_sort(all.candidates);
  return all;
}

inline ExtractionResult extract_corpus_batch(Gateway& gw, const std::vector<Segment>& segs, const PromptTemplate& tpl,
                                             const ExtractOptions& opts = {}) {
  return merge_results(parallel_map(segs.size(), opts.jobs,
                                    [&](std::size_t i) { return extract_from_corpus(gw, segs[i], tpl, opts); }));
}

inline ExtractionResult extract_qa_batch(Gateway& gw, const std::vector<QAPair>& pairs, const PromptTemplate& tpl,
                                         const ExtractOptions& opts = {}) {
  return merge_results(
      parallel_map(pairs.size(), opts.jobs, [&](std::size_t i) { return extract_from_qa(gw, pairs[i], tpl, opts); }));
}

}  // namespace rationale
