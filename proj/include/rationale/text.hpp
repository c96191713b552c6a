#pragma once

// Text primitives shared by the extraction and evaluation stages. Nothing here
// tokenizes for a model; tokenization belongs to the backend.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace rationale::text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline std::string_view trim_left(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && is_space(s[i])) ++i;
  return s.substr(i);
}

inline std::string_view trim_right(std::string_view s) {
  std::size_t n = s.size();
  while (n > 0 && is_space(s[n - 1])) --n;
  return s.substr(0, n);
}

inline std::string_view trim(std::string_view s) { return trim_right(trim_left(s)); }

/// Half-open byte range [begin, end) into some source string.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

/// Words are maximal runs of non-whitespace bytes.
inline std::vector<Span> word_spans(std::string_view s) {
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    if (i == s.size()) break;
    std::size_t b = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    out.push_back({b, i});
  }
  return out;
}

inline std::size_t word_count(std::string_view s) { return word_spans(s).size(); }

inline std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  for (auto sp : word_spans(s)) out.emplace_back(s.substr(sp.begin, sp.size()));
  return out;
}

/// A sentence span covers its trailing whitespace, so consecutive spans tile
/// the whole input. `content_end` marks the end of the sentence proper.
struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t content_end = 0;
  std::size_t end = 0;
};

/// Rule-based splitter: a sentence ends at '.', '!' or '?' (plus any closing
/// quotes or brackets) when followed by whitespace or end of text. Leading
/// whitespace of the input belongs to the first sentence.
inline std::vector<SentenceSpan> split_sentences(std::string_view s) {
  auto is_terminal = [](char c) { return c == '.' || c == '!' || c == '?'; };
  auto is_closer = [](char c) { return c == '"' || c == '\'' || c == ')' || c == ']' || c == '}'; };

  std::vector<SentenceSpan> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_terminal(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < s.size() && is_terminal(s[j])) ++j;
    while (j < s.size() && is_closer(s[j])) ++j;
    if (j == s.size() || is_space(s[j])) {
      std::size_t content_end = j;
      while (j < s.size() && is_space(s[j])) ++j;
      out.push_back({start, content_end, j});
      start = j;
    }
    i = j;
  }
  if (start < s.size()) {
    std::size_t content_end = start + trim_right(s.substr(start)).size();
    out.push_back({start, content_end, s.size()});
  }
  return out;
}

/// Removes grouping commas, surrounding whitespace, a leading '$' or '+', a
/// trailing period, and redundant fractional zeros: "1,234." -> "1234",
/// "72.0" -> "72". Non-numeric input is returned trimmed and otherwise intact.
inline std::string normalize_number(std::string_view raw) {
  std::string s;
  for (char c : trim(raw))
    if (c != ',' && !is_space(c)) s.push_back(c);
  while (!s.empty() && s.back() == '.') s.pop_back();
  if (!s.empty() && (s.front() == '$' || s.front() == '+')) s.erase(s.begin());

  bool neg = !s.empty() && s.front() == '-';
  std::string_view body = std::string_view(s).substr(neg ? 1 : 0);
  bool seen_dot = false;
  bool numeric = !body.empty();
  for (char c : body) {
    if (c == '.') {
      if (seen_dot) numeric = false;
      seen_dot = true;
    } else if (!is_digit(c)) {
      numeric = false;
    }
  }
  if (!numeric) return std::string(trim(raw));

  std::string out(body);
  if (seen_dot) {
    while (!out.empty() && out.back() == '0') out.pop_back();
    if (!out.empty() && out.back() == '.') out.pop_back();
  }
  std::size_t lead = 0;
  while (lead + 1 < out.size() && out[lead] == '0' && out[lead + 1] != '.') ++lead;
  out.erase(0, lead);
  if (out.empty() || out.front() == '.') out.insert(out.begin(), '0');
  if (neg && out != "0") out.insert(out.begin(), '-');
  return out;
}

inline bool is_numeric(std::string_view raw) {
  std::string n = normalize_number(raw);
  if (n.empty()) return false;
  std::size_t i = n.front() == '-' ? 1 : 0;
  if (i == n.size()) return false;
  for (; i < n.size(); ++i)
    if (!is_digit(n[i]) && n[i] != '.') return false;
  return true;
}

/// Every number-like run in `s` ("1,234", "-3.5", "72."), normalized.
inline std::vector<std::string> numbers_in(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_digit(s[i])) {
      ++i;
      continue;
    }
    std::size_t b = i;
    if (b > 0 && s[b - 1] == '-') --b;
    std::size_t j = i;
    while (j < s.size()) {
      if (is_digit(s[j])) {
        ++j;
      } else if ((s[j] == ',' || s[j] == '.') && j + 1 < s.size() && is_digit(s[j + 1])) {
        ++j;
      } else {
        break;
      }
    }
    out.push_back(normalize_number(s.substr(b, j - b)));
    i = j;
  }
  return out;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  for (auto w : words(s)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Shortest decimal that round-trips: 1.2 -> "1.2", 0.0 -> "0".
inline std::string format_shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace rationale::text
