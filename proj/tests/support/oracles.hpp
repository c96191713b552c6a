#pragma once

// Reference computations used only by tests. Each one is written directly
// from the defining formula and shares no code path with the library, so
// agreement is evidence rather than tautology.

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace oracle {

/// Character-level rule table in the mock fixture format: a rule applies when
/// the context ends with "context_suffix" (if given) and the token equals
/// "token"; otherwise the token has probability 1/vocab_size.
inline double char_prob(const nlohmann::json& fixture, const std::string& ctx, char tok) {
  const auto& dist = fixture.at("distribution");
  for (const auto& r : dist.at("rules")) {
    if (r.contains("context_suffix")) {
      auto suf = r.at("context_suffix").get<std::string>();
      if (ctx.size() < suf.size() || ctx.compare(ctx.size() - suf.size(), suf.size(), suf) != 0) continue;
    }
    if (r.contains("token") && r.at("token").get<std::string>() != std::string(1, tok)) continue;
    return r.at("prob").get<double>();
  }
  return 1.0 / dist.at("vocab_size").get<double>();
}

/// -sum_{k < min(horizon, |following|)} decay^k * ln p(following[k] | context + following[:k])
inline double future_loss(const nlohmann::json& fixture, const std::string& context, const std::string& following,
                          double decay, std::size_t horizon) {
  double loss = 0.0;
  std::size_t n = std::min(horizon, following.size());
  for (std::size_t k = 0; k < n; ++k) {
    std::string ctx = context + following.substr(0, k);
    loss += -std::pow(decay, static_cast<double>(k)) * std::log(char_prob(fixture, ctx, following[k]));
  }
  return loss;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  return dot / (na * nb);
}

struct Labeled {
  double gain;
  bool helpful;
};

/// Precision of {gain >= t}; -1 when that set is empty.
inline double precision_at(const std::vector<Labeled>& xs, double t) {
  int kept = 0, good = 0;
  for (const auto& x : xs)
    if (x.gain >= t) {
      ++kept;
      good += x.helpful;
    }
  return kept == 0 ? -1.0 : static_cast<double>(good) / kept;
}

}  // namespace oracle
