#pragma once

// Table-driven mock model server. A fixture is a JSON object:
//
//   {
//     "tokenizer": "word" | "char",            // default "word"
//     "logprobs": true,                         // echo-logprob capability
//     "shuffle_completions": false,             // seeded permutation of outputs
//     "completions": [                          // first matching rule wins
//       {"prompt": "...", "outputs": ["A", "B"]},          // exact match
//       {"prompt_suffix": "...", "outputs": [...]},
//       {"prompt_contains": "...", "outputs": [...]}
//     ],
//     "default_outputs": ["..."],               // used when no rule matches
//     "distribution": {
//       "rules": [                              // first matching rule wins
//         {"context_contains": "...", "token": "24", "prob": 0.9}
//       ],                                     // also "context", "context_suffix"
//       "vocab_size": 4                         // or "default_prob": 0.5
//     },
//     "embedding": {"dim": 3, "max_tokens": 8, "table": {"x": [1, 0, 0]}},
//     "models": {"<model id>": { ...same keys... }}   // per-model overrides
//   }
//
// The "word" tokenizer emits leading whitespace plus a run of non-whitespace
// per token (trailing whitespace is its own token), so tokens concatenate
// back to the input. Rule "token" values are compared after trimming. The
// "char" tokenizer emits one token per byte.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rationale/backend.hpp"
#include "rationale/text.hpp"

namespace rationale {

struct MockRequest {
  enum class Kind { Generate, Score, Embed };
  Kind kind = Kind::Generate;
  std::string model;
  std::string prompt;        // generate prompt, score prefix, or embed input
  std::string continuation;  // score only
  int num_samples = 0;
  double temperature = 0.0;
  int top_k = 0;
  std::optional<std::uint64_t> seed;
};

class MockBackend : public Backend {
 public:
  explicit MockBackend(const nlohmann::json& fixture) {
    if (!fixture.is_object()) throw Error(ErrorCode::SchemaError, "mock fixture must be a JSON object");
    default_model_ = parse_model(fixture, nullptr);
    if (fixture.contains("models")) {
      for (const auto& [id, sub] : fixture.at("models").items()) models_.emplace(id, parse_model(sub, &default_model_));
    }
  }

  static std::shared_ptr<MockBackend> from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open mock fixture " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::SchemaError, "mock fixture " + path + ": " + e.what());
    }
    return std::make_shared<MockBackend>(j);
  }

  std::vector<std::string> generate(const GenerationRequest& req, const std::string& model) override {
    log({MockRequest::Kind::Generate, model, req.prompt, {}, req.num_samples, req.temperature, req.top_k, req.seed});
    const Model& m = model_for(model);

    std::vector<std::string> outputs = m.default_outputs;
    for (const auto& rule : m.completions) {
      if (rule.matches(req.prompt)) {
        outputs = rule.outputs;
        break;
      }
    }
    if (outputs.empty()) outputs.push_back("");
    if (m.shuffle && req.seed) {
      std::mt19937_64 rng(*req.seed ^ text::fnv1a64(req.prompt));
      std::shuffle(outputs.begin(), outputs.end(), rng);
    }

    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(req.num_samples));
    for (int k = 0; k < req.num_samples; ++k) {
      auto toks = tokenize(m, outputs[static_cast<std::size_t>(k) % outputs.size()]);
      if (toks.size() > static_cast<std::size_t>(req.max_tokens)) toks.resize(static_cast<std::size_t>(req.max_tokens));
      std::string s;
      for (auto& t : toks) s += t;
      out.push_back(std::move(s));
    }
    return out;
  }

  std::vector<TokenScore> score_continuation(std::string_view prefix, std::string_view continuation,
                                             const std::string& model) override {
    log({MockRequest::Kind::Score, model, std::string(prefix), std::string(continuation), 0, 0.0, 0, std::nullopt});
    const Model& m = model_for(model);
    if (!m.logprobs) throw Error(ErrorCode::CapabilityMissing, "mock model '" + model + "' has logprobs disabled");

    std::vector<TokenScore> out;
    std::string context(prefix);
    std::size_t idx = 0;
    for (auto& tok : tokenize(m, continuation)) {
      out.push_back({tok, logprob(m, context, tok), idx++});
      context += tok;
    }
    return out;
  }

  EmbeddingVector embed(std::string_view input, const std::string& model, Diagnostics& diag) override {
    log({MockRequest::Kind::Embed, model, std::string(input), {}, 0, 0.0, 0, std::nullopt});
    const Model& m = model_for(model);
    std::string key(input);
    if (m.embed_max_tokens) {
      auto toks = tokenize(m, input);
      if (toks.size() > *m.embed_max_tokens) {
        diag.warn("TruncationWarning: embedding input of " + std::to_string(toks.size()) + " tokens cut to " +
                  std::to_string(*m.embed_max_tokens));
        if (!m.embed_table.count(key)) {
          key.clear();
          for (std::size_t i = 0; i < *m.embed_max_tokens; ++i) key += toks[i];
        }
      }
    }
    if (auto it = m.embed_table.find(key); it != m.embed_table.end()) return {it->second};

    // Unscripted text gets a stable pseudo-random vector in [-1, 1]^dim.
    std::size_t dim = m.embed_dim.value_or(8);
    EmbeddingVector v;
    v.values.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      auto h = text::fnv1a64(key, 0xcbf29ce484222325ULL ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
      v.values[i] = static_cast<double>(h >> 11) / static_cast<double>(1ULL << 53) * 2.0 - 1.0;
    }
    return v;
  }

  bool supports_logprobs(const std::string& model) const override { return model_for(model).logprobs; }

  std::optional<std::size_t> embedding_dim(const std::string& model) const override {
    return model_for(model).embed_dim;
  }

  std::size_t count_tokens(std::string_view s, const std::string& model) override {
    return tokenize(model_for(model), s).size();
  }

  std::vector<std::string> tokenize(std::string_view s, const std::string& model = {}) const {
    return tokenize(model_for(model), s);
  }

  std::vector<MockRequest> request_log() const {
    std::lock_guard lock(mu_);
    return log_;
  }

  void clear_log() {
    std::lock_guard lock(mu_);
    log_.clear();
  }

 private:
  struct CompletionRule {
    enum class Match { Exact, Suffix, Contains } match = Match::Exact;
    std::string key;
    std::vector<std::string> outputs;

    bool matches(std::string_view prompt) const {
      switch (match) {
        case Match::Exact: return prompt == key;
        case Match::Suffix: return prompt.ends_with(key);
        case Match::Contains: return prompt.find(key) != std::string_view::npos;
      }
      return false;
    }
  };

  struct ProbRule {
    std::optional<std::string> context, suffix, contains;
    std::optional<std::string> token;
    double prob = 1.0;

    bool matches(std::string_view ctx, std::string_view tok) const {
      if (context && ctx != *context) return false;
      if (suffix && !ctx.ends_with(*suffix)) return false;
      if (contains && ctx.find(*contains) == std::string_view::npos) return false;
      if (token && text::trim(tok) != *token) return false;
      return true;
    }
  };

  struct Model {
    bool char_tokenizer = false;
    bool logprobs = true;
    bool shuffle = false;
    std::vector<CompletionRule> completions;
    std::vector<std::string> default_outputs;
    std::vector<ProbRule> prob_rules;
    double default_logprob = -std::log(1000.0);
    std::optional<std::size_t> embed_dim;
    std::optional<std::size_t> embed_max_tokens;
    std::map<std::string, std::vector<double>> embed_table;
  };

  static Model parse_model(const nlohmann::json& j, const Model* base) {
    Model m = base ? *base : Model{};
    try {
      if (j.contains("tokenizer")) {
        auto t = j.at("tokenizer").get<std::string>();
        if (t != "word" && t != "char") throw Error(ErrorCode::SchemaError, "mock tokenizer must be 'word' or 'char'");
        m.char_tokenizer = t == "char";
      }
      if (j.contains("logprobs")) m.logprobs = j.at("logprobs").get<bool>();
      if (j.contains("shuffle_completions")) m.shuffle = j.at("shuffle_completions").get<bool>();
      if (j.contains("completions")) {
        m.completions.clear();
        for (const auto& r : j.at("completions")) {
          CompletionRule rule;
          if (r.contains("prompt")) {
            rule.key = r.at("prompt").get<std::string>();
          } else if (r.contains("prompt_suffix")) {
            rule.match = CompletionRule::Match::Suffix;
            rule.key = r.at("prompt_suffix").get<std::string>();
          } else if (r.contains("prompt_contains")) {
            rule.match = CompletionRule::Match::Contains;
            rule.key = r.at("prompt_contains").get<std::string>();
          } else {
            throw Error(ErrorCode::SchemaError, "completion rule needs prompt, prompt_suffix or prompt_contains");
          }
          rule.outputs = r.at("outputs").get<std::vector<std::string>>();
          m.completions.push_back(std::move(rule));
        }
      }
      if (j.contains("default_outputs")) m.default_outputs = j.at("default_outputs").get<std::vector<std::string>>();
      if (j.contains("distribution")) {
        const auto& d = j.at("distribution");
        if (d.contains("rules")) {
          m.prob_rules.clear();
          for (const auto& r : d.at("rules")) {
            ProbRule rule;
            if (r.contains("context")) rule.context = r.at("context").get<std::string>();
            if (r.contains("context_suffix")) rule.suffix = r.at("context_suffix").get<std::string>();
            if (r.contains("context_contains")) rule.contains = r.at("context_contains").get<std::string>();
            if (r.contains("token")) rule.token = r.at("token").get<std::string>();
            rule.prob = r.at("prob").get<double>();
            if (!(rule.prob >= 0.0 && rule.prob <= 1.0))
              throw Error(ErrorCode::SchemaError, "distribution rule prob must lie in [0, 1]");
            m.prob_rules.push_back(std::move(rule));
          }
        }
        if (d.contains("vocab_size")) {
          auto v = d.at("vocab_size").get<double>();
          if (!(v >= 1.0)) throw Error(ErrorCode::SchemaError, "vocab_size must be >= 1");
          m.default_logprob = -std::log(v);
        } else if (d.contains("default_prob")) {
          m.default_logprob = std::log(d.at("default_prob").get<double>());
        }
      }
      if (j.contains("embedding")) {
        const auto& e = j.at("embedding");
        if (e.contains("dim")) m.embed_dim = e.at("dim").get<std::size_t>();
        if (e.contains("max_tokens")) m.embed_max_tokens = e.at("max_tokens").get<std::size_t>();
        if (e.contains("table")) {
          m.embed_table.clear();
          for (const auto& [k, v] : e.at("table").items()) m.embed_table[k] = v.get<std::vector<double>>();
        }
        if (!m.embed_dim && !m.embed_table.empty()) m.embed_dim = m.embed_table.begin()->second.size();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::SchemaError, std::string("mock fixture: ") + e.what());
    }
    return m;
  }

  const Model& model_for(const std::string& id) const {
    auto it = models_.find(id);
    return it == models_.end() ? default_model_ : it->second;
  }

  static std::vector<std::string> tokenize(const Model& m, std::string_view s) {
    std::vector<std::string> out;
    if (m.char_tokenizer) {
      for (char c : s) out.emplace_back(1, c);
      return out;
    }
    std::size_t i = 0;
    while (i < s.size()) {
      std::size_t b = i;
      while (i < s.size() && text::is_space(s[i])) ++i;
      while (i < s.size() && !text::is_space(s[i])) ++i;
      out.emplace_back(s.substr(b, i - b));
    }
    return out;
  }

  static double logprob(const Model& m, std::string_view ctx, std::string_view tok) {
    for (const auto& r : m.prob_rules)
      if (r.matches(ctx, tok)) return std::log(r.prob);
    return m.default_logprob;
  }

  void log(MockRequest r) {
    std::lock_guard lock(mu_);
    log_.push_back(std::move(r));
  }

  Model default_model_;
  std::map<std::string, Model> models_;
  mutable std::mutex mu_;
  std::vector<MockRequest> log_;
};

}  // namespace rationale
