#pragma once

// Model access boundary. Every generation, token-scoring and embedding call in
// the pipeline goes through a Gateway, which binds each pipeline role to one
// Backend and enforces the request/response contracts in one place.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rationale/error.hpp"

namespace rationale {

enum class Role { Extractor, Rationalyst, Agent, Scorer, Embedder };

inline constexpr std::array<Role, 5> kAllRoles = {Role::Extractor, Role::Rationalyst, Role::Agent,
                                                  Role::Scorer, Role::Embedder};

constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::Extractor: return "extractor";
    case Role::Rationalyst: return "rationalyst";
    case Role::Agent: return "agent";
    case Role::Scorer: return "scorer";
    case Role::Embedder: return "embedder";
  }
  return "unknown";
}

inline std::optional<Role> role_from_string(std::string_view s) {
  for (Role r : kAllRoles)
    if (to_string(r) == s) return r;
  return std::nullopt;
}

struct BackendRole {
  Role role = Role::Agent;
  std::string endpoint;
  std::string model_id;
};

struct GenerationRequest {
  std::string prompt;
  int num_samples = 1;
  double temperature = 0.7;
  int top_k = 3;
  int max_tokens = 256;
  std::vector<std::string> stop_strings;
  std::optional<std::uint64_t> seed;
};

struct TokenScore {
  std::string token;
  double logprob = 0.0;  // natural log
  std::size_t index = 0;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dim() const { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Thread-safe sink for non-fatal conditions (truncation, skipped items).
class Diagnostics {
 public:
  void warn(std::string message) {
    std::lock_guard lock(mu_);
    warnings_.push_back(std::move(message));
  }
  std::vector<std::string> warnings() const {
    std::lock_guard lock(mu_);
    return warnings_;
  }
  std::size_t count_containing(std::string_view needle) const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& w : warnings_)
      if (w.find(needle) != std::string::npos) ++n;
    return n;
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> warnings_;
};

/// A model server. Implementations must be safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  /// Raw completions; the gateway applies stop strings and count checks.
  virtual std::vector<std::string> generate(const GenerationRequest& req, const std::string& model) = 0;

  /// Per-token log-probabilities of `continuation` given `prefix`, in the
  /// backend's own tokenization.
  virtual std::vector<TokenScore> score_continuation(std::string_view prefix, std::string_view continuation,
                                                     const std::string& model) = 0;

  virtual EmbeddingVector embed(std::string_view text, const std::string& model, Diagnostics& diag) = 0;

  virtual bool supports_logprobs(const std::string& /*model*/) const { return true; }

  /// Declared embedding width, when the backend advertises one.
  virtual std::optional<std::size_t> embedding_dim(const std::string& /*model*/) const { return std::nullopt; }

  virtual std::size_t count_tokens(std::string_view text, const std::string& model) {
    if (text.empty()) return 0;
    return score_continuation("", text, model).size();
  }
};

/// Cuts `s` at the earliest occurrence of any stop string.
inline std::string apply_stop_strings(std::string s, const std::vector<std::string>& stops) {
  std::size_t cut = s.size();
  for (const auto& stop : stops) {
    if (stop.empty()) continue;
    auto pos = s.find(stop);
    if (pos != std::string::npos && pos < cut) cut = pos;
  }
  s.resize(cut);
  return s;
}

class Gateway {
 public:
  void bind(BackendRole role, std::shared_ptr<Backend> backend) {
    Role r = role.role;
    bindings_[r] = Binding{std::move(role), std::move(backend)};
  }

  bool is_bound(Role r) const { return bindings_.count(r) > 0; }

  const BackendRole& binding(Role r) const { return get(r).role; }

  std::shared_ptr<Backend> backend(Role r) const { return get(r).backend; }

  /// Exactly req.num_samples completions, each cut at its first stop string.
  /// Throws EmptyCompletion when every completion is empty.
  std::vector<std::string> generate(const GenerationRequest& req, Role r) const {
    if (req.prompt.empty()) throw Error(ErrorCode::PreconditionViolation, "generate: empty prompt");
    if (req.num_samples < 1) throw Error(ErrorCode::PreconditionViolation, "generate: num_samples must be >= 1");
    if (!(req.temperature >= 0.0)) throw Error(ErrorCode::PreconditionViolation, "generate: temperature must be >= 0");
    if (req.top_k < 1 || req.max_tokens < 1)
      throw Error(ErrorCode::PreconditionViolation, "generate: top_k and max_tokens must be positive");

    const auto& b = get(r);
    auto raw = b.backend->generate(req, b.role.model_id);
    if (raw.size() != static_cast<std::size_t>(req.num_samples))
      throw Error(ErrorCode::BackendRefusal, "generate: backend returned " + std::to_string(raw.size()) +
                                                 " completions, expected " + std::to_string(req.num_samples));
    bool any = false;
    for (auto& c : raw) {
      c = apply_stop_strings(std::move(c), req.stop_strings);
      any = any || !c.empty();
    }
    if (!any) throw Error(ErrorCode::EmptyCompletion, "generate: all completions empty");
    return raw;
  }

  std::vector<TokenScore> score_continuation(std::string_view prefix, std::string_view continuation, Role r) const {
    if (continuation.empty())
      throw Error(ErrorCode::PreconditionViolation, "score_continuation: empty continuation");
    const auto& b = get(r);
    if (!b.backend->supports_logprobs(b.role.model_id))
      throw Error(ErrorCode::CapabilityMissing,
                  "backend for role " + std::string(to_string(r)) + " cannot return echo logprobs");
    auto scores = b.backend->score_continuation(prefix, continuation, b.role.model_id);
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i].index != i) throw Error(ErrorCode::SchemaError, "score_continuation: non-contiguous token indices");
    return scores;
  }

  EmbeddingVector embed(std::string_view text, Role r = Role::Embedder) {
    if (text.empty()) throw Error(ErrorCode::PreconditionViolation, "embed: empty text");
    const auto& b = get(r);
    auto v = b.backend->embed(text, b.role.model_id, diag_);
    auto declared = b.backend->embedding_dim(b.role.model_id);
    std::size_t expected = 0;
    {
      std::lock_guard lock(dim_mu_);
      if (declared) run_dim_ = run_dim_.value_or(*declared);
      if (!run_dim_) run_dim_ = v.dim();
      expected = *run_dim_;
    }
    if (v.dim() != expected || v.dim() == 0)
      throw Error(ErrorCode::DimensionMismatch,
                  "embed: got " + std::to_string(v.dim()) + " values, expected " + std::to_string(expected));
    for (double x : v.values)
      if (!std::isfinite(x)) throw Error(ErrorCode::SchemaError, "embed: non-finite component");
    return v;
  }

  std::size_t count_tokens(std::string_view text, Role r = Role::Scorer) const {
    const auto& b = get(r);
    return b.backend->count_tokens(text, b.role.model_id);
  }

  Diagnostics& diagnostics() { return diag_; }
  const Diagnostics& diagnostics() const { return diag_; }

 private:
  struct Binding {
    BackendRole role;
    std::shared_ptr<Backend> backend;
  };

  const Binding& get(Role r) const {
    auto it = bindings_.find(r);
    if (it == bindings_.end() || !it->second.backend)
      throw Error(ErrorCode::PreconditionViolation, "no backend bound for role " + std::string(to_string(r)));
    return it->second;
  }

  std::map<Role, Binding> bindings_;
  Diagnostics diag_;
  mutable std::mutex dim_mu_;
  std::optional<std::size_t> run_dim_;
};

}  // namespace rationale
