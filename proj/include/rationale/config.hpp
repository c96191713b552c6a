#pragma once

// Run configuration: one JSON file, validated in full before any backend is
// contacted. Unknown keys are rejected with their dotted path. Relative file
// paths are resolved against the config file's directory.
//
//   {
//     "backends": {"<name>": {"type": "mock", "fixture": "mock.json"}
//                 | {"type": "http", "endpoint": "http://host:port/v1",
//                    "api_key_env": "VAR", "logprobs": true,
//                    "embedding_dim": 768, "timeout_ms": 60000}},
//     "roles": {"extractor" | "rationalyst" | "agent" | "scorer" | "embedder":
//               {"backend": "<name>", "model": "<model id>"}},
//     "prefilter":   {"alpha": 0.3, "max_tokens": 2000, "reference": "question+answer"},
//     "segment":     {"max_words": 2000},
//     "extract":     {"num_samples": 1, "temperature": 0.7, "top_k": 3, "max_tokens": 4096},
//     "filter":      {"decay": 0.9, "horizon": 64, "tau_f": 0, "tau_f_by_source": {"gsm8k": 1.2}},
//     "calibrate":   {"target_precision": 0.95},
//     "emit":        {"max_context_tokens": 0},
//     "supervision": {"mode": "implicit", "num_candidates": 3, "temperature": 0.7,
//                     "top_k": 3, "max_steps": 20, "stop_pattern": "The final answer is:",
//                     "max_step_tokens": 256, "max_rationale_tokens": 128},
//     "seed": 0,
//     "jobs": 1
//   }
//
// API keys never live in the file; "api_key_env" names the environment
// variable that holds one.

#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "rationale/backend.hpp"
#include "rationale/extractor.hpp"
#include "rationale/filter.hpp"
#include "rationale/http_backend.hpp"
#include "rationale/jsonl.hpp"
#include "rationale/mock_backend.hpp"
#include "rationale/prefilter.hpp"
#include "rationale/supervision.hpp"

namespace rationale {

struct BackendSpec {
  std::string type;  // mock | http
  std::string fixture;
  std::string endpoint;
  std::string api_key_env;
  bool logprobs = true;
  std::optional<std::size_t> embedding_dim;
  long timeout_ms = 60000;
  friend bool operator==(const BackendSpec&, const BackendSpec&) = default;
};

struct RoleSpec {
  std::string backend;
  std::string model;
  friend bool operator==(const RoleSpec&, const RoleSpec&) = default;
};

struct RunConfig {
  std::map<std::string, BackendSpec> backends;
  std::map<std::string, RoleSpec> roles;

  double alpha = 0.3;
  std::size_t prefilter_max_tokens = 2000;
  std::string reference = "question+answer";  // question | answer | question+answer

  std::size_t segment_max_words = 2000;

  int extract_num_samples = 1;
  double extract_temperature = 0.7;
  int extract_top_k = 3;
  int extract_max_tokens = 4096;

  WeightSchedule weights;
  double tau_f = 0.0;
  std::map<std::string, double> tau_f_by_source;

  double target_precision = 0.95;

  std::size_t emit_max_context_tokens = 0;  // 0: no truncation

  SupervisionConfig supervision;

  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  bool operator==(const RunConfig& o) const {
    auto sup = [](const SupervisionConfig& s) {
      return std::tie(s.mode, s.num_candidates, s.temperature, s.top_k, s.max_steps, s.stop_pattern,
                      s.max_step_tokens, s.max_rationale_tokens);
    };
    return backends == o.backends && roles == o.roles && alpha == o.alpha &&
           prefilter_max_tokens == o.prefilter_max_tokens && reference == o.reference &&
           segment_max_words == o.segment_max_words && extract_num_samples == o.extract_num_samples &&
           extract_temperature == o.extract_temperature && extract_top_k == o.extract_top_k &&
           extract_max_tokens == o.extract_max_tokens && weights.decay == o.weights.decay &&
           weights.horizon == o.weights.horizon && tau_f == o.tau_f && tau_f_by_source == o.tau_f_by_source &&
           target_precision == o.target_precision && emit_max_context_tokens == o.emit_max_context_tokens &&
           sup(supervision) == sup(o.supervision) && seed == o.seed && jobs == o.jobs;
  }

  ExtractOptions extract_options() const {
    ExtractOptions o;
    o.num_samples = extract_num_samples;
    o.temperature = extract_temperature;
    o.top_k = extract_top_k;
    o.max_tokens = extract_max_tokens;
    o.seed = seed;
    o.jobs = jobs;
    return o;
  }

  SupervisionConfig supervision_config() const {
    SupervisionConfig s = supervision;
    s.seed = seed;
    s.jobs = jobs;
    return s;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigInvalid, m); };
    for (const auto& [name, b] : backends) {
      if (b.type == "mock") {
        if (b.fixture.empty()) fail("backends." + name + ".fixture is required for mock backends");
      } else if (b.type == "http") {
        if (!b.endpoint.starts_with("http://")) fail("backends." + name + ".endpoint must start with http://");
      } else {
        fail("backends." + name + ".type must be 'mock' or 'http'");
      }
    }
    for (const auto& [role, r] : roles) {
      if (!role_from_string(role)) fail("roles." + role + ": unknown role");
      if (!backends.count(r.backend)) fail("roles." + role + ".backend: no backend named '" + r.backend + "'");
    }
    if (!(alpha >= -1.0 && alpha <= 1.0)) fail("prefilter.alpha must lie in [-1, 1]");
    if (prefilter_max_tokens == 0) fail("prefilter.max_tokens must be positive");
    if (reference != "question" && reference != "answer" && reference != "question+answer")
      fail("prefilter.reference must be question, answer or question+answer");
    if (segment_max_words == 0) fail("segment.max_words must be positive");
    if (extract_num_samples < 1) fail("extract.num_samples must be >= 1");
    if (!(extract_temperature >= 0.0)) fail("extract.temperature must be >= 0");
    if (extract_top_k < 1 || extract_max_tokens < 1) fail("extract.top_k and extract.max_tokens must be positive");
    try {
      weights.validate();
      supervision.validate();
    } catch (const Error& e) {
      fail(e.what());
    }
    if (!(target_precision > 0.0 && target_precision <= 1.0)) fail("calibrate.target_precision must lie in (0, 1]");
    if (jobs == 0) fail("jobs must be positive");
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, (path.empty() ? "config" : path) + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw Error(ErrorCode::ConfigInvalid, (path.empty() ? k : path + "." + k) + ": unknown key");
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, path + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::check_keys;
  using detail::read;
  RunConfig c;
  check_keys(j, "", {"backends", "roles", "prefilter", "segment", "extract", "filter", "calibrate", "emit",
                     "supervision", "seed", "jobs"});
  if (j.contains("backends")) {
    if (!j.at("backends").is_object()) throw Error(ErrorCode::ConfigInvalid, "backends must be an object");
    for (const auto& [name, b] : j.at("backends").items()) {
      std::string p = "backends." + name;
      if (!b.is_object()) throw Error(ErrorCode::ConfigInvalid, p + " must be an object");
      for (const auto& [k, v] : b.items()) {
        static const std::set<std::string> ok = {"type",     "fixture",       "endpoint",  "api_key_env",
                                                 "logprobs", "embedding_dim", "timeout_ms"};
        if (!ok.count(k)) throw Error(ErrorCode::ConfigInvalid, p + "." + k + ": unknown key");
      }
      BackendSpec s;
      read(b, "type", s.type, p);
      read(b, "fixture", s.fixture, p);
      read(b, "endpoint", s.endpoint, p);
      read(b, "api_key_env", s.api_key_env, p);
      read(b, "logprobs", s.logprobs, p);
      if (b.contains("embedding_dim")) {
        std::size_t d = 0;
        read(b, "embedding_dim", d, p);
        s.embedding_dim = d;
      }
      read(b, "timeout_ms", s.timeout_ms, p);
      if (!s.fixture.empty() && std::filesystem::path(s.fixture).is_relative())
        s.fixture = std::filesystem::absolute(base_dir / s.fixture).lexically_normal().string();
      c.backends[name] = s;
    }
  }
  if (j.contains("roles")) {
    check_keys(j.at("roles"), "roles", {"extractor", "rationalyst", "agent", "scorer", "embedder"});
    for (const auto& [role, r] : j.at("roles").items()) {
      std::string p = "roles." + role;
      check_keys(r, p, {"backend", "model"});
      RoleSpec s;
      read(r, "backend", s.backend, p);
      read(r, "model", s.model, p);
      c.roles[role] = s;
    }
  }
  if (j.contains("prefilter")) {
    const auto& s = j.at("prefilter");
    check_keys(s, "prefilter", {"alpha", "max_tokens", "reference"});
    read(s, "alpha", c.alpha, "prefilter");
    read(s, "max_tokens", c.prefilter_max_tokens, "prefilter");
    read(s, "reference", c.reference, "prefilter");
  }
  if (j.contains("segment")) {
    check_keys(j.at("segment"), "segment", {"max_words"});
    read(j.at("segment"), "max_words", c.segment_max_words, "segment");
  }
  if (j.contains("extract")) {
    const auto& s = j.at("extract");
    check_keys(s, "extract", {"num_samples", "temperature", "top_k", "max_tokens"});
    read(s, "num_samples", c.extract_num_samples, "extract");
    read(s, "temperature", c.extract_temperature, "extract");
    read(s, "top_k", c.extract_top_k, "extract");
    read(s, "max_tokens", c.extract_max_tokens, "extract");
  }
  if (j.contains("filter")) {
    const auto& s = j.at("filter");
    check_keys(s, "filter", {"decay", "horizon", "tau_f", "tau_f_by_source"});
    read(s, "decay", c.weights.decay, "filter");
    read(s, "horizon", c.weights.horizon, "filter");
    read(s, "tau_f", c.tau_f, "filter");
    read(s, "tau_f_by_source", c.tau_f_by_source, "filter");
  }
  if (j.contains("calibrate")) {
    check_keys(j.at("calibrate"), "calibrate", {"target_precision"});
    read(j.at("calibrate"), "target_precision", c.target_precision, "calibrate");
  }
  if (j.contains("emit")) {
    check_keys(j.at("emit"), "emit", {"max_context_tokens"});
    read(j.at("emit"), "max_context_tokens", c.emit_max_context_tokens, "emit");
  }
  if (j.contains("supervision")) {
    const auto& s = j.at("supervision");
    check_keys(s, "supervision", {"mode", "num_candidates", "temperature", "top_k", "max_steps", "stop_pattern",
                                  "max_step_tokens", "max_rationale_tokens"});
    std::string mode(to_string(c.supervision.mode));
    read(s, "mode", mode, "supervision");
    try {
      c.supervision.mode = mode_from_string(mode);
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigInvalid, std::string("supervision.mode: ") + e.what());
    }
    read(s, "num_candidates", c.supervision.num_candidates, "supervision");
    read(s, "temperature", c.supervision.temperature, "supervision");
    read(s, "top_k", c.supervision.top_k, "supervision");
    read(s, "max_steps", c.supervision.max_steps, "supervision");
    read(s, "stop_pattern", c.supervision.stop_pattern, "supervision");
    read(s, "max_step_tokens", c.supervision.max_step_tokens, "supervision");
    read(s, "max_rationale_tokens", c.supervision.max_rationale_tokens, "supervision");
  }
  read(j, "seed", c.seed, "config");
  read(j, "jobs", c.jobs, "config");
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, path + ": " + e.what());
  }
  return config_from_json(j, std::filesystem::path(path).parent_path());
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json backends = nlohmann::json::object();
  for (const auto& [name, b] : c.backends) {
    nlohmann::json j = {{"type", b.type}};
    if (!b.fixture.empty()) j["fixture"] = b.fixture;
    if (!b.endpoint.empty()) j["endpoint"] = b.endpoint;
    if (!b.api_key_env.empty()) j["api_key_env"] = b.api_key_env;
    if (b.type == "http") {
      j["logprobs"] = b.logprobs;
      j["timeout_ms"] = b.timeout_ms;
    }
    if (b.embedding_dim) j["embedding_dim"] = *b.embedding_dim;
    backends[name] = j;
  }
  nlohmann::json roles = nlohmann::json::object();
  for (const auto& [role, r] : c.roles) roles[role] = {{"backend", r.backend}, {"model", r.model}};
  const auto& s = c.supervision;
  return {
      {"backends", backends},
      {"roles", roles},
      {"prefilter", {{"alpha", c.alpha}, {"max_tokens", c.prefilter_max_tokens}, {"reference", c.reference}}},
      {"segment", {{"max_words", c.segment_max_words}}},
      {"extract",
       {{"num_samples", c.extract_num_samples},
        {"temperature", c.extract_temperature},
        {"top_k", c.extract_top_k},
        {"max_tokens", c.extract_max_tokens}}},
      {"filter",
       {{"decay", c.weights.decay},
        {"horizon", c.weights.horizon},
        {"tau_f", c.tau_f},
        {"tau_f_by_source", c.tau_f_by_source}}},
      {"calibrate", {{"target_precision", c.target_precision}}},
      {"emit", {{"max_context_tokens", c.emit_max_context_tokens}}},
      {"supervision",
       {{"mode", to_string(s.mode)},
        {"num_candidates", s.num_candidates},
        {"temperature", s.temperature},
        {"top_k", s.top_k},
        {"max_steps", s.max_steps},
        {"stop_pattern", s.stop_pattern},
        {"max_step_tokens", s.max_step_tokens},
        {"max_rationale_tokens", s.max_rationale_tokens}}},
      {"seed", c.seed},
      {"jobs", c.jobs},
  };
}

/// Instantiates backends (sharing one instance among roles that name the same
/// backend) and binds every configured role.
inline void bind_roles(Gateway& gw, const RunConfig& c) {
  std::map<std::string, std::shared_ptr<Backend>> made;
  for (const auto& [name, b] : c.backends) {
    if (b.type == "mock") {
      made[name] = MockBackend::from_file(b.fixture);
    } else {
      HttpBackendOptions o;
      o.endpoint = b.endpoint;
      o.logprobs = b.logprobs;
      o.embedding_dim = b.embedding_dim;
      o.timeout = std::chrono::milliseconds(b.timeout_ms);
      if (!b.api_key_env.empty())
        if (const char* key = std::getenv(b.api_key_env.c_str())) o.api_key = key;
      made[name] = std::make_shared<HttpBackend>(o);
    }
  }
  for (const auto& [role, r] : c.roles) {
    auto spec = c.backends.at(r.backend);
    Role rr = *role_from_string(role);
    std::string model = r.model.empty() && rr == Role::Embedder ? kDefaultEmbedderModel : r.model;
    BackendRole br{rr, spec.type == "http" ? spec.endpoint : "mock:" + spec.fixture, model};
    gw.bind(br, made.at(r.backend));
  }
}

}  // namespace rationale
