#pragma once

// Rationale-guided chain-of-thought decoding.
//
// Each iteration: the rationale model reads the trajectory and proposes a
// rationale r; the agent proposes N candidate next steps (from T alone in
// implicit mode, from T plus r in explicit mode); every candidate is scored
// by its mean token log-probability given T and r (under the scorer in
// implicit mode, under the agent in explicit mode); the best candidate is
// appended. The loop stops once the last step contains the stop pattern or
// max_steps steps have been taken.
//
// Unsupervised mode is the greedy baseline: one agent sample per step, no
// rationale, no scoring.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rationale/backend.hpp"
#include "rationale/concurrency.hpp"
#include "rationale/filter.hpp"
#include "rationale/text.hpp"

namespace rationale {

enum class SupervisionMode { Implicit, Explicit, Unsupervised };

constexpr std::string_view to_string(SupervisionMode m) {
  switch (m) {
    case SupervisionMode::Implicit: return "implicit";
    case SupervisionMode::Explicit: return "explicit";
    case SupervisionMode::Unsupervised: return "unsupervised";
  }
  return "unknown";
}

inline SupervisionMode mode_from_string(std::string_view s) {
  if (s == "implicit") return SupervisionMode::Implicit;
  if (s == "explicit") return SupervisionMode::Explicit;
  if (s == "unsupervised" || s == "none") return SupervisionMode::Unsupervised;
  throw Error(ErrorCode::ConfigInvalid, "unknown supervision mode '" + std::string(s) + "'");
}

class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::string question) : question_(std::move(question)) {}

  const std::string& question() const { return question_; }
  const std::vector<std::string>& steps() const { return steps_; }
  bool terminated() const { return terminated_; }

  void append(std::string step) {
    if (terminated_) throw Error(ErrorCode::PreconditionViolation, "append to a terminated trajectory");
    steps_.push_back(std::move(step));
  }
  void terminate() { terminated_ = true; }

  /// Question and steps joined by newlines.
  std::string render() const {
    std::string out = question_;
    for (const auto& s : steps_) {
      out += '\n';
      out += s;
    }
    return out;
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  std::string question_;
  std::vector<std::string> steps_;
  bool terminated_ = false;
};

inline constexpr const char* kDefaultStopPattern = "The final answer is:";

struct SupervisionConfig {
  SupervisionMode mode = SupervisionMode::Implicit;
  int num_candidates = 3;
  double temperature = 0.7;
  int top_k = 3;
  int max_steps = 20;
  std::string stop_pattern = kDefaultStopPattern;
  int max_step_tokens = 256;
  int max_rationale_tokens = 128;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;

  void validate() const {
    if (num_candidates < 1) throw Error(ErrorCode::ConfigInvalid, "num_candidates must be >= 1");
    if (max_steps < 1) throw Error(ErrorCode::ConfigInvalid, "max_steps must be >= 1");
    if (!(temperature >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "temperature must be >= 0");
    if (top_k < 1) throw Error(ErrorCode::ConfigInvalid, "top_k must be >= 1");
    if (stop_pattern.empty()) throw Error(ErrorCode::ConfigInvalid, "stop_pattern must be non-empty");
  }
};

struct ScoredStep {
  std::string text;
  std::optional<double> heuristic;  // empty when unscored or dropped
  int rank_index = 0;
};

struct IterationTrace {
  std::string rationale;
  bool rationale_fallback = false;
  std::string agent_prompt;
  std::vector<ScoredStep> candidates;
  std::size_t chosen_index = 0;
};

struct RunTrace {
  SupervisionMode mode = SupervisionMode::Implicit;
  Trajectory trajectory;
  std::vector<IterationTrace> iterations;
  std::string terminated_reason;  // stop_pattern | max_steps | no_candidates | error
  std::string diagnostic;

  bool stopped_by_pattern() const { return terminated_reason == "stop_pattern"; }
};

inline nlohmann::json to_json(const RunTrace& t) {
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : t.iterations) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : it.candidates)
      cands.push_back({{"text", c.text}, {"h", c.heuristic ? nlohmann::json(*c.heuristic) : nlohmann::json(nullptr)}});
    nlohmann::json j = {{"rationale", it.rationale}, {"candidates", cands}, {"chosen_index", it.chosen_index}};
    if (it.rationale_fallback) j["rationale_fallback"] = true;
    its.push_back(std::move(j));
  }
  nlohmann::json j = {{"question", t.trajectory.question()},
                      {"mode", to_string(t.mode)},
                      {"iterations", its},
                      {"final_steps", t.trajectory.steps()},
                      {"terminated_reason", t.terminated_reason}};
  if (!t.diagnostic.empty()) j["diagnostic"] = t.diagnostic;
  return j;
}

/// Rebuilds the trajectory from the trace's recorded choices.
inline Trajectory replay(const RunTrace& t) {
  Trajectory out(t.trajectory.question());
  for (const auto& it : t.iterations) out.append(it.candidates.at(it.chosen_index).text);
  return out;
}

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t base, std::size_t iteration, std::uint64_t stream) {
  std::uint64_t x = base ^ (0x9e3779b97f4a7c15ULL * (iteration + 1)) ^ (0xbf58476d1ce4e5b9ULL * (stream + 1));
  x ^= x >> 31;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 29;
  return x;
}

inline std::string first_line(std::string_view s) {
  auto t = text::trim_left(s);
  auto nl = t.find('\n');
  return std::string(text::trim_right(t.substr(0, nl)));
}

}  // namespace detail

/// Prompt for the rationale model: the trajectory plus a newline, the same
/// shape as training contexts built from QA steps.
inline std::string rationale_prompt(const Trajectory& t) { return t.render() + "\n"; }

/// Agent prompt. `prelude` (few-shot text) is shared by every mode; explicit
/// mode appends the rationale for this iteration only.
inline std::string agent_prompt(const Trajectory& t, std::string_view prelude, const std::string* rationale) {
  std::string p(prelude);
  p += t.render();
  p += '\n';
  if (rationale) {
    p += *rationale;
    p += '\n';
  }
  return p;
}

inline std::string shots_prelude(const std::vector<std::string>& shots) {
  std::string p;
  for (const auto& s : shots) {
    p += s;
    p += "\n\n";
  }
  return p;
}

inline std::string generate_rationale(const Gateway& gw, const Trajectory& t, const SupervisionConfig& cfg,
                                      std::size_t iteration = 0) {
  if (t.terminated()) throw Error(ErrorCode::PreconditionViolation, "rationale requested for a terminated trajectory");
  GenerationRequest req;
  req.prompt = rationale_prompt(t);
  req.temperature = cfg.temperature;
  req.top_k = cfg.top_k;
  req.max_tokens = cfg.max_rationale_tokens;
  if (cfg.seed) req.seed = detail::derive_seed(*cfg.seed, iteration, 0);
  std::string r;
  try {
    r = detail::first_line(gw.generate(req, Role::Rationalyst).front());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyCompletion) throw;
  }
  if (r.empty()) throw Error(ErrorCode::EmptyRationale, "rationale model returned an empty completion");
  return r;
}

/// Candidate next steps, each cut to its first non-blank line. Empty
/// candidates are dropped; throws NoCandidates when none remain.
inline std::vector<std::string> propose_steps(const Gateway& gw, const std::string& prompt, int n,
                                              const SupervisionConfig& cfg, std::size_t iteration = 0) {
  if (n < 1) throw Error(ErrorCode::PreconditionViolation, "propose_steps: N must be >= 1");
  GenerationRequest req;
  req.prompt = prompt;
  req.num_samples = n;
  req.temperature = cfg.temperature;
  req.top_k = cfg.top_k;
  req.max_tokens = cfg.max_step_tokens;
  if (cfg.seed) req.seed = detail::derive_seed(*cfg.seed, iteration, 1);
  std::vector<std::string> raw;
  try {
    raw = gw.generate(req, Role::Agent);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyCompletion) throw Error(ErrorCode::NoCandidates, "agent produced no candidates");
    throw;
  }
  std::vector<std::string> out;
  for (const auto& c : raw) {
    auto s = detail::first_line(c);
    if (!s.empty()) out.push_back(std::move(s));
  }
  if (out.empty()) throw Error(ErrorCode::NoCandidates, "agent produced no non-empty candidates");
  return out;
}

inline std::vector<std::string> propose_steps(const Gateway& gw, const Trajectory& t, const std::string& rationale,
                                              SupervisionMode mode, int n, const SupervisionConfig& cfg,
                                              std::string_view prelude = {}, std::size_t iteration = 0) {
  const std::string* r = mode == SupervisionMode::Explicit ? &rationale : nullptr;
  return propose_steps(gw, agent_prompt(t, prelude, r), n, cfg, iteration);
}

/// Mean per-token log-probability of `step` after the trajectory and the
/// rationale, from the scorer (implicit) or the agent (explicit).
inline double heuristic(const Gateway& gw, const Trajectory& t, const std::string& rationale, const std::string& step,
                        SupervisionMode mode) {
  if (step.empty()) throw Error(ErrorCode::PreconditionViolation, "heuristic: empty step");
  Role role = mode == SupervisionMode::Explicit ? Role::Agent : Role::Scorer;
  auto scores = gw.score_continuation(scoring_context(t.render() + "\n", rationale), step, role);
  if (scores.empty()) throw Error(ErrorCode::NonFiniteScore, "heuristic: step scored as zero tokens");
  double sum = 0.0;
  for (const auto& s : scores) sum += s.logprob;
  double h = sum / static_cast<double>(scores.size());
  if (!std::isfinite(h)) throw Error(ErrorCode::NonFiniteScore, "heuristic: non-finite score");
  return h;
}

/// Index of the largest heuristic; earlier candidates win ties. Unscored
/// entries are skipped; returns 0 if nothing was scored.
inline std::size_t select_best(const std::vector<std::optional<double>>& hs) {
  std::size_t best = 0;
  bool found = false;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (!hs[i]) continue;
    if (!found || *hs[i] > *hs[best]) {
      best = i;
      found = true;
    }
  }
  return best;
}

/// Ranks by descending heuristic; unscored last; ties keep generation order.
inline void assign_ranks(std::vector<ScoredStep>& steps) {
  std::vector<std::size_t> order(steps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ha = steps[a].heuristic;
    const auto& hb = steps[b].heuristic;
    if (ha && hb) return *ha > *hb;
    return ha.has_value() && !hb.has_value();
  });
  for (std::size_t r = 0; r < order.size(); ++r) steps[order[r]].rank_index = static_cast<int>(r);
}

inline RunTrace run(Gateway& gw, const std::string& question, const SupervisionConfig& cfg,
                    const std::vector<std::string>& shots = {}) {
  cfg.validate();
  RunTrace trace;
  trace.mode = cfg.mode;
  trace.trajectory = Trajectory(question);
  Trajectory& T = trace.trajectory;
  const std::string prelude = shots_prelude(shots);

  for (std::size_t iter = 0;; ++iter) {
    if (iter == static_cast<std::size_t>(cfg.max_steps)) {
      trace.terminated_reason = "max_steps";
      trace.diagnostic = "MaxStepsExceeded: no step matched the stop pattern within " + std::to_string(cfg.max_steps) +
                         " steps";
      break;
    }
    IterationTrace it;
    bool supervised = cfg.mode != SupervisionMode::Unsupervised;
    if (supervised) {
      try {
        it.rationale = generate_rationale(gw, T, cfg, iter);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyRationale) throw;
        gw.diagnostics().warn("supervise: iteration " + std::to_string(iter) + ": " + e.what() +
                              "; taking one unsupervised step");
        it.rationale_fallback = true;
        supervised = false;
      }
    }

    const std::string* r = supervised && cfg.mode == SupervisionMode::Explicit ? &it.rationale : nullptr;
    it.agent_prompt = agent_prompt(T, prelude, r);
    std::vector<std::string> steps;
    try {
      steps = propose_steps(gw, it.agent_prompt, supervised ? cfg.num_candidates : 1, cfg, iter);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoCandidates) throw;
      trace.terminated_reason = "no_candidates";
      trace.diagnostic = e.what();
      break;
    }

    std::vector<std::optional<double>> hs(steps.size());
    if (supervised) {
      hs = parallel_map(steps.size(), cfg.jobs, [&](std::size_t i) -> std::optional<double> {
        try {
          return heuristic(gw, T, it.rationale, steps[i], cfg.mode);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NonFiniteScore) throw;
          gw.diagnostics().warn("supervise: dropped candidate " + std::to_string(i) + ": " + e.what());
          return std::nullopt;
        }
      });
    }
    for (std::size_t i = 0; i < steps.size(); ++i) it.candidates.push_back({steps[i], hs[i], 0});
    assign_ranks(it.candidates);
    it.chosen_index = select_best(hs);

    T.append(it.candidates[it.chosen_index].text);
    trace.iterations.push_back(std::move(it));
    if (T.steps().back().find(cfg.stop_pattern) != std::string::npos) {
      trace.terminated_reason = "stop_pattern";
      break;
    }
  }
  T.terminate();
  return trace;
}

}  // namespace rationale
