#pragma once

// Two-arm exact-match evaluation: a baseline arm (greedy, unsupervised by
// default) and a supervised arm run on the same instances with the same seeds.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rationale/supervision.hpp"

namespace rationale {

struct TaskInstance {
  std::string id;
  std::string question;
  std::string gold;
  std::string task_tag;
  std::vector<std::string> shots;
};

inline TaskInstance task_from_json(const nlohmann::json& j) {
  TaskInstance t;
  t.id = j.at("id").get<std::string>();
  t.question = j.at("question").get<std::string>();
  t.gold = j.at("gold").get<std::string>();
  t.task_tag = j.value("task_tag", "");
  if (j.contains("shots")) t.shots = j.at("shots").get<std::vector<std::string>>();
  if (text::trim(t.gold).empty()) throw Error(ErrorCode::SchemaError, "task '" + t.id + "' has an empty gold answer");
  return t;
}

/// Trimmed, trailing period removed, numbers normalized ("1,234." -> "1234"),
/// a parenthesized choice letter unwrapped ("(B)" -> "B").
inline std::string normalize_answer(std::string_view raw) {
  std::string s(text::trim(raw));
  while (!s.empty() && s.back() == '.') s.pop_back();
  if (s.size() == 3 && s.front() == '(' && s.back() == ')') s = s.substr(1, 1);
  if (s.size() == 2 && s.back() == ')') s.pop_back();
  if (text::is_numeric(s)) return text::normalize_number(s);
  return s;
}

/// Text after the last stop pattern in the final step, normalized. Throws
/// NoAnswerFound when the final step lacks the pattern.
inline std::string extract_answer(const Trajectory& t, std::string_view stop_pattern = kDefaultStopPattern) {
  if (t.steps().empty()) throw Error(ErrorCode::NoAnswerFound, "empty trajectory");
  const std::string& last = t.steps().back();
  auto p = last.rfind(stop_pattern);
  if (p == std::string::npos) throw Error(ErrorCode::NoAnswerFound, "final step lacks the stop pattern");
  auto ans = normalize_answer(std::string_view(last).substr(p + stop_pattern.size()));
  if (ans.empty()) throw Error(ErrorCode::NoAnswerFound, "nothing after the stop pattern");
  return ans;
}

inline bool answers_match(std::string_view predicted, std::string_view gold) {
  return text::to_lower(normalize_answer(predicted)) == text::to_lower(normalize_answer(gold));
}

struct EvalResult {
  std::string task_tag;
  double baseline_acc = 0.0;
  double supervised_acc = 0.0;
  double delta = 0.0;
  std::size_t n = 0;
  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

struct ArmOutcome {
  std::optional<std::string> answer;
  bool correct = false;
  RunTrace trace;
  std::string error;
};

struct InstanceRecord {
  std::string id;
  std::string task_tag;
  std::string gold;
  ArmOutcome baseline;
  ArmOutcome supervised;
};

inline nlohmann::json to_json(const ArmOutcome& a) {
  nlohmann::json j = {{"answer", a.answer ? nlohmann::json(*a.answer) : nlohmann::json(nullptr)},
                      {"correct", a.correct},
                      {"trace", to_json(a.trace)}};
  if (!a.error.empty()) j["error"] = a.error;
  return j;
}

inline nlohmann::json to_json(const InstanceRecord& r) {
  return {{"id", r.id},
          {"task_tag", r.task_tag},
          {"gold", r.gold},
          {"baseline", to_json(r.baseline)},
          {"supervised", to_json(r.supervised)}};
}

inline nlohmann::json to_json(const EvalResult& r) {
  return {{"task_tag", r.task_tag},
          {"baseline_acc", r.baseline_acc},
          {"supervised_acc", r.supervised_acc},
          {"delta", r.delta},
          {"n", r.n}};
}

struct EvalOptions {
  SupervisionConfig supervised;
  SupervisionConfig baseline;  // mode defaults to unsupervised
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::map<std::string, std::size_t> expected_shots;  // task_tag -> few-shot count

  EvalOptions() { baseline.mode = SupervisionMode::Unsupervised; }
};

struct EvalReport {
  std::vector<EvalResult> results;  // one per task_tag, then "all"
  std::vector<InstanceRecord> records;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : results) j.push_back(rationale::to_json(r));
    return j;
  }

  std::string to_table() const {
    std::string out = "Task            Baseline  Supervised   Delta      n\n";
    for (const auto& r : results) {
      char line[160];
      std::snprintf(line, sizeof line, "%-14s %9.1f %11.1f  %+6.1f %6zu\n", r.task_tag.c_str(), 100.0 * r.baseline_acc,
                    100.0 * r.supervised_acc, 100.0 * r.delta, r.n);
      out += line;
    }
    return out;
  }
};

inline ArmOutcome run_arm(Gateway& gw, const TaskInstance& task, SupervisionConfig cfg, std::uint64_t seed) {
  ArmOutcome a;
  cfg.seed = seed;
  try {
    a.trace = run(gw, task.question, cfg, task.shots);
    a.answer = extract_answer(a.trace.trajectory, cfg.stop_pattern);
    a.correct = answers_match(*a.answer, task.gold);
  } catch (const Error& e) {
    a.error = e.what();
    a.correct = false;
  }
  return a;
}

/// Runs both arms over every instance. Per-instance failures are scored
/// incorrect and recorded; the suite never aborts part-way.
inline EvalReport evaluate(Gateway& gw, const std::vector<TaskInstance>& tasks, const EvalOptions& opts) {
  if (tasks.empty()) throw Error(ErrorCode::PreconditionViolation, "evaluate: no tasks");
  opts.supervised.validate();
  opts.baseline.validate();
  for (const auto& t : tasks) {
    auto it = opts.expected_shots.find(t.task_tag);
    if (it != opts.expected_shots.end() && it->second != t.shots.size())
      throw Error(ErrorCode::SchemaError, "task '" + t.id + "' has " + std::to_string(t.shots.size()) +
                                              " shots, expected " + std::to_string(it->second));
  }

  EvalReport rep;
  rep.records = parallel_map(tasks.size(), opts.jobs, [&](std::size_t i) {
    const auto& t = tasks[i];
    std::uint64_t seed = opts.seed + i;
    InstanceRecord r{t.id, t.task_tag, t.gold, run_arm(gw, t, opts.baseline, seed), run_arm(gw, t, opts.supervised, seed)};
    if (!r.baseline.error.empty()) gw.diagnostics().warn("eval: " + t.id + " baseline: " + r.baseline.error);
    if (!r.supervised.error.empty()) gw.diagnostics().warn("eval: " + t.id + " supervised: " + r.supervised.error);
    return r;
  });

  struct Acc {
    std::size_t n = 0, base = 0, sup = 0;
  };
  std::map<std::string, Acc> by_tag;
  Acc all;
  for (const auto& r : rep.records) {
    for (Acc* a : {&by_tag[r.task_tag], &all}) {
      ++a->n;
      a->base += r.baseline.correct ? 1 : 0;
      a->sup += r.supervised.correct ? 1 : 0;
    }
  }
  auto make = [](const std::string& tag, const Acc& a) {
    EvalResult e;
    e.task_tag = tag;
    e.n = a.n;
    e.baseline_acc = static_cast<double>(a.base) / static_cast<double>(a.n);
    e.supervised_acc = static_cast<double>(a.sup) / static_cast<double>(a.n);
    e.delta = (static_cast<double>(a.sup) - static_cast<double>(a.base)) / static_cast<double>(a.n);
    return e;
  };
  for (const auto& [tag, a] : by_tag) rep.results.push_back(make(tag, a));
  rep.results.push_back(make("all", all));
  return rep;
}

}  // namespace rationale
