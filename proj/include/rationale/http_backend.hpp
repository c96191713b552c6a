#pragma once

// Completion-API client. Routes, relative to the configured endpoint:
//   POST {endpoint}/completions  {model, prompt, n, temperature, top_k,
//                                 max_tokens, stop, echo, logprobs[, seed]}
//   POST {endpoint}/embeddings   {model, input}
// Token scoring sends prefix+continuation with echo=true, max_tokens=0 and
// keeps the echoed tokens that end past the prefix.

#include <chrono>
#include <limits>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rationale/backend.hpp"

namespace rationale {

struct HttpBackendOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8000/v1
  std::string api_key;   // sent as a bearer token when non-empty
  bool logprobs = true;
  std::optional<std::size_t> embedding_dim;
  std::chrono::milliseconds timeout{60000};
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendOptions opts) : opts_(std::move(opts)) {
    const std::string& ep = opts_.endpoint;
    if (!ep.starts_with("http://"))
      throw Error(ErrorCode::ConfigInvalid, "endpoint must be an http:// URI: '" + ep + "'");
    auto path_start = ep.find('/', 7);
    host_ = path_start == std::string::npos ? ep : ep.substr(0, path_start);
    base_path_ = path_start == std::string::npos ? "" : ep.substr(path_start);
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  }

  static nlohmann::json completion_body(const GenerationRequest& req, const std::string& model) {
    nlohmann::json body = {
        {"model", model},
        {"prompt", req.prompt},
        {"n", req.num_samples},
        {"temperature", req.temperature},
        {"top_k", req.top_k},
        {"max_tokens", req.max_tokens},
        {"stop", req.stop_strings},
        {"echo", false},
        {"logprobs", nullptr},
    };
    if (req.seed) body["seed"] = *req.seed;
    return body;
  }

  std::vector<std::string> generate(const GenerationRequest& req, const std::string& model) override {
    auto resp = post("/completions", completion_body(req, model));
    const auto& choices = field(resp, "choices");
    std::vector<std::string> out(choices.size());
    std::vector<bool> seen(choices.size(), false);
    for (std::size_t k = 0; k < choices.size(); ++k) {
      const auto& c = choices[k];
      std::size_t idx = c.contains("index") ? c.at("index").get<std::size_t>() : k;
      if (idx >= out.size() || seen[idx]) throw Error(ErrorCode::SchemaError, "completions: bad choice index");
      seen[idx] = true;
      out[idx] = c.value("text", "");
    }
    return out;
  }

  std::vector<TokenScore> score_continuation(std::string_view prefix, std::string_view continuation,
                                             const std::string& model) override {
    if (!opts_.logprobs) throw Error(ErrorCode::CapabilityMissing, "endpoint configured without logprobs");
    std::string full(prefix);
    full += continuation;
    nlohmann::json body = {
        {"model", model}, {"prompt", full}, {"n", 1},         {"temperature", 0.0}, {"top_k", 1},
        {"max_tokens", 0}, {"stop", nlohmann::json::array()}, {"echo", true},       {"logprobs", 0},
    };
    auto resp = post("/completions", body);
    const auto& choices = field(resp, "choices");
    if (choices.empty()) throw Error(ErrorCode::SchemaError, "completions: no choices");
    const auto& c = choices[0];
    if (!c.contains("logprobs") || c.at("logprobs").is_null())
      throw Error(ErrorCode::CapabilityMissing, "server did not return echo logprobs");
    const auto& lp = c.at("logprobs");
    auto tokens = lp.at("tokens").get<std::vector<std::string>>();
    const auto& values = lp.at("token_logprobs");
    std::vector<std::size_t> offsets;
    if (lp.contains("text_offset")) {
      offsets = lp.at("text_offset").get<std::vector<std::size_t>>();
    } else {
      std::size_t off = 0;
      for (auto& t : tokens) {
        offsets.push_back(off);
        off += t.size();
      }
    }
    if (values.size() != tokens.size() || offsets.size() != tokens.size())
      throw Error(ErrorCode::SchemaError, "logprobs arrays differ in length");

    std::vector<TokenScore> out;
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      if (offsets[k] + tokens[k].size() <= prefix.size()) continue;
      if (offsets[k] >= full.size()) break;  // generated tail, if any
      double v = values[k].is_null() ? std::numeric_limits<double>::quiet_NaN() : values[k].get<double>();
      out.push_back({tokens[k], v, out.size()});
    }
    return out;
  }

  EmbeddingVector embed(std::string_view input, const std::string& model, Diagnostics&) override {
    auto resp = post("/embeddings", {{"model", model}, {"input", std::string(input)}});
    const auto& data = field(resp, "data");
    if (data.empty()) throw Error(ErrorCode::SchemaError, "embeddings: empty data");
    return {data[0].at("embedding").get<std::vector<double>>()};
  }

  bool supports_logprobs(const std::string&) const override { return opts_.logprobs; }

  std::optional<std::size_t> embedding_dim(const std::string&) const override { return opts_.embedding_dim; }

 private:
  nlohmann::json post(const std::string& route, const nlohmann::json& body) const {
    httplib::Client cli(host_);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts_.timeout);
    cli.set_connection_timeout(secs);
    cli.set_read_timeout(secs);
    cli.set_write_timeout(secs);
    httplib::Headers headers;
    if (!opts_.api_key.empty()) headers.emplace("Authorization", "Bearer " + opts_.api_key);

    auto res = cli.Post(base_path_ + route, headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::TransportError, host_ + base_path_ + route + ": " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw Error(ErrorCode::BackendRefusal, route + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::SchemaError, route + ": " + e.what());
    }
  }

  static const nlohmann::json& field(const nlohmann::json& j, const char* name) {
    if (!j.is_object() || !j.contains(name) || !j.at(name).is_array())
      throw Error(ErrorCode::SchemaError, std::string("response lacks array field '") + name + "'");
    return j.at(name);
  }

  HttpBackendOptions opts_;
  std::string host_;
  std::string base_path_;
};

}  // namespace rationale
