#pragma once

// Filtration by weighted future-token loss. For a candidate rationale r at
// position i, the loss over the following tokens x_i..x_n is
//
//   L_i(r) = -sum_k w_k * log p(x_{i+k} | preceding, r, x_{i..i+k-1}),  w_k = decay^k
//
// with L_i(eps) the same sum with no rationale inserted. The gain is
// L_i(eps) - L_i(r): positive when the rationale makes the continuation easier
// to predict. A candidate is kept when gain >= tau_f.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rationale/backend.hpp"
#include "rationale/concurrency.hpp"
#include "rationale/extractor.hpp"
#include "rationale/text.hpp"

namespace rationale {

struct WeightSchedule {
  double decay = 0.9;
  std::size_t horizon = 64;

  void validate() const {
    if (!(decay > 0.0 && decay <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "decay must lie in (0, 1]");
    if (horizon == 0) throw Error(ErrorCode::ConfigInvalid, "horizon must be positive");
  }

  /// w_0..w_{n-1} by repeated multiplication, so w_k is bit-identical to
  /// multiplying decay into 1.0 k times.
  std::vector<double> weights(std::size_t n) const {
    std::vector<double> w(n);
    double cur = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      w[k] = cur;
      cur *= decay;
    }
    return w;
  }
};

/// Context the continuation is scored against. The rationale is followed by
/// a newline when the preceding text ends a line, otherwise by a space.
inline std::string scoring_context(std::string_view preceding, std::string_view rationale) {
  std::string ctx(preceding);
  if (rationale.empty()) return ctx;
  ctx += rationale;
  ctx += (!preceding.empty() && preceding.back() == '\n') ? '\n' : ' ';
  return ctx;
}

inline double future_loss(const Gateway& gw, std::string_view preceding, std::string_view rationale,
                          std::string_view following, const WeightSchedule& ws, Role scorer = Role::Scorer) {
  if (following.empty()) throw Error(ErrorCode::PreconditionViolation, "future_loss: empty following text");
  auto scores = gw.score_continuation(scoring_context(preceding, rationale), following, scorer);
  std::size_t n = std::min(ws.horizon, scores.size());
  auto w = ws.weights(n);
  double loss = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double lp = scores[k].logprob;
    if (!std::isfinite(lp)) throw Error(ErrorCode::NonFiniteLoss, "non-finite logprob at future token " + std::to_string(k));
    loss -= w[k] * lp;
  }
  return loss;
}

struct FilterVerdict {
  std::string candidate_id;
  std::string source;
  std::string doc_id;
  double loss_with = 0.0;
  double loss_without = 0.0;
  double gain = 0.0;
  bool kept = false;
  double tau_f = 0.0;
  bool valid = true;
};

inline nlohmann::json to_json(const FilterVerdict& v) {
  nlohmann::json j = {{"candidate_id", v.candidate_id}, {"kept", v.kept}};
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  j["loss_with"] = v.valid ? num(v.loss_with) : nlohmann::json(nullptr);
  j["loss_without"] = v.valid ? num(v.loss_without) : nlohmann::json(nullptr);
  j["gain"] = v.valid ? num(v.gain) : nlohmann::json(nullptr);
  j["tau_f"] = num(v.tau_f);
  if (!v.valid) j["invalid"] = true;
  return j;
}

/// Scores one candidate; does not decide kept.
inline FilterVerdict score(const Gateway& gw, const RationaleCandidate& c, const WeightSchedule& ws,
                           Role scorer = Role::Scorer) {
  FilterVerdict v;
  v.candidate_id = c.id();
  v.source = c.source;
  v.doc_id = c.doc_id;
  v.loss_without = future_loss(gw, c.preceding, "", c.following, ws, scorer);
  v.loss_with = c.rationale.empty() ? v.loss_without : future_loss(gw, c.preceding, c.rationale, c.following, ws, scorer);
  v.gain = v.loss_without - v.loss_with;
  return v;
}

/// Scores every candidate; non-finite scores yield an invalid verdict rather
/// than failing the batch. Output index i belongs to input candidate i.
inline std::vector<FilterVerdict> score_batch(Gateway& gw, const std::vector<RationaleCandidate>& cs,
                                              const WeightSchedule& ws, std::size_t jobs = 1,
                                              Role scorer = Role::Scorer) {
  ws.validate();
  return parallel_map(cs.size(), jobs, [&](std::size_t i) {
    try {
      return score(gw, cs[i], ws, scorer);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteLoss) throw;
      gw.diagnostics().warn("filter: dropped " + cs[i].id() + ": " + e.what());
      FilterVerdict v;
      v.candidate_id = cs[i].id();
      v.source = cs[i].source;
      v.doc_id = cs[i].doc_id;
      v.valid = false;
      v.loss_with = v.loss_without = v.gain = std::numeric_limits<double>::quiet_NaN();
      return v;
    }
  });
}

/// One row of the sampling/filtration statistics table.
struct FilterRow {
  std::string source;
  std::size_t docs = 0;
  std::size_t rationales = 0;  // before filtering
  std::size_t kept = 0;
  std::optional<double> tau_f;

  /// 100 * kept / rationales rounded to one decimal; empty when nothing was sampled.
  std::optional<double> pct_left() const {
    if (rationales == 0) return std::nullopt;
    return std::round(1000.0 * static_cast<double>(kept) / static_cast<double>(rationales)) / 10.0;
  }

  std::string pct_left_text() const {
    auto p = pct_left();
    return p ? text::format_fixed(*p, 1) : std::string("-");
  }

  std::string tau_text() const {
    if (!tau_f) return "-";
    if (std::isinf(*tau_f)) return "inf";
    return text::format_shortest(*tau_f);
  }
};

struct FilterReport {
  std::vector<FilterRow> rows;
  std::size_t invalid = 0;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& r : rows) {
      nlohmann::json row = {{"docs", r.docs}, {"rationales", r.rationales}, {"kept", r.kept}};
      auto p = r.pct_left();
      row["rationales_left_pct"] = p ? nlohmann::json(*p) : nlohmann::json(nullptr);
      row["tau_f"] = r.tau_f && std::isfinite(*r.tau_f) ? nlohmann::json(*r.tau_f) : nlohmann::json(nullptr);
      j[r.source] = row;
    }
    return j;
  }

  /// Plain-text table: Dataset, # Docs., # Rationales, Rationales Left (%), tau_f.
  std::string to_table() const {
    std::vector<std::array<std::string, 5>> cells;
    cells.push_back({"Dataset", "# Docs.", "# Rationales", "Rationales Left (%)", "tau_f"});
    for (const auto& r : rows)
      cells.push_back({r.source.empty() ? std::string("(none)") : r.source, std::to_string(r.docs),
                       std::to_string(r.rationales), r.pct_left_text(), r.tau_text()});
    std::array<std::size_t, 5> width{};
    auto display_width = [](const std::string& s) {
      std::size_t n = 0;
      for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
      return n;
    };
    for (const auto& row : cells)
      for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], display_width(row[c]));
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
      for (std::size_t c = 0; c < 5; ++c) {
        const auto& s = cells[r][c];
        std::string pad(width[c] - display_width(s), ' ');
        out += c == 0 ? s + pad : "  " + pad + s;
      }
      out += "\n";
    }
    return out;
  }
};

struct FilterResult {
  std::vector<FilterVerdict> verdicts;  // input order, kept flag set
  std::vector<std::size_t> kept_indices;
  FilterReport report;
};

/// Applies thresholds. `tau_by_source` overrides `tau_f` for listed sources.
inline FilterResult filter(std::vector<FilterVerdict> verdicts, double tau_f,
                           const std::map<std::string, double>& tau_by_source = {}) {
  FilterResult out;
  struct Acc {
    std::set<std::string> docs;
    std::size_t before = 0, kept = 0;
  };
  std::map<std::string, Acc> acc;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    auto& v = verdicts[i];
    auto it = tau_by_source.find(v.source);
    v.tau_f = it == tau_by_source.end() ? tau_f : it->second;
    v.kept = v.valid && v.gain >= v.tau_f;
    auto& a = acc[v.source];
    a.docs.insert(v.doc_id);
    ++a.before;
    if (v.kept) {
      ++a.kept;
      out.kept_indices.push_back(i);
    }
    if (!v.valid) ++out.report.invalid;
  }
  for (const auto& [src, a] : acc) {
    auto it = tau_by_source.find(src);
    out.report.rows.push_back({src, a.docs.size(), a.before, a.kept, it == tau_by_source.end() ? tau_f : it->second});
  }
  out.verdicts = std::move(verdicts);
  return out;
}

struct LabeledGain {
  double gain = 0.0;
  bool helpful = false;
};

struct CalibrationOutcome {
  double tau_f = std::numeric_limits<double>::infinity();  // +inf when unattainable
  double precision = 0.0;
  std::size_t kept = 0;
  bool attainable() const { return std::isfinite(tau_f); }
};

/// Smallest threshold, taken from the observed gains, whose kept set
/// (gain >= threshold) reaches `target_precision`.
inline CalibrationOutcome calibrate_from_gains(const std::vector<LabeledGain>& labeled, double target_precision = 0.95) {
  std::size_t helpful = 0;
  for (const auto& l : labeled) helpful += l.helpful ? 1 : 0;
  if (labeled.empty() || helpful == 0)
    throw Error(ErrorCode::InsufficientLabels, "calibration needs at least one helpful labeled example");

  std::vector<double> thresholds;
  for (const auto& l : labeled) thresholds.push_back(l.gain);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  for (double t : thresholds) {
    std::size_t kept = 0, good = 0;
    for (const auto& l : labeled) {
      if (l.gain >= t) {
        ++kept;
        good += l.helpful ? 1 : 0;
      }
    }
    double precision = static_cast<double>(good) / static_cast<double>(kept);
    if (precision >= target_precision) return {t, precision, kept};
  }
  return {};
}

struct LabeledCandidate {
  RationaleCandidate candidate;
  bool helpful = false;
};

struct ThresholdCalibration {
  std::vector<LabeledCandidate> labeled_pairs;
  double target_precision = 0.95;
};

/// Scores each labeled candidate and calibrates on the resulting gains.
/// Candidates with non-finite scores are left out (and logged).
inline CalibrationOutcome calibrate_threshold(Gateway& gw, const ThresholdCalibration& cal, const WeightSchedule& ws,
                                              std::size_t jobs = 1, Role scorer = Role::Scorer) {
  std::vector<RationaleCandidate> cs;
  for (const auto& l : cal.labeled_pairs) cs.push_back(l.candidate);
  auto verdicts = score_batch(gw, cs, ws, jobs, scorer);
  std::vector<LabeledGain> gains;
  for (std::size_t i = 0; i < verdicts.size(); ++i)
    if (verdicts[i].valid) gains.push_back({verdicts[i].gain, cal.labeled_pairs[i].helpful});
  return calibrate_from_gains(gains, cal.target_precision);
}

}  // namespace rationale
