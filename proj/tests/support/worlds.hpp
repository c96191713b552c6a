#pragma once

// Scripted mock worlds shared by the unit and acceptance suites.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rationale/eval.hpp"
#include "rationale/extractor.hpp"
#include "rationale/supervision.hpp"
#include "rationale/template.hpp"

namespace worlds {

using nlohmann::json;
using rationale::Trajectory;

inline json prob_rule(const std::string& contains, const std::string& token, double p) {
  return {{"context_contains", contains}, {"token", token}, {"prob", p}};
}

// ---------------------------------------------------------------------------
// One question whose three-step gold chain wins every iteration once the
// rationale is in the scoring context. Each candidate set has equal token
// counts and differs from gold in one key token: gold's key token gets
// p = 0.9 under the iteration's rationale, distractors get 0.1 or the
// 1/1000 default, so the gold step has the strictly largest mean logprob.
// The unconditioned agent lists a distractor first. Completions are keyed
// per model id ("rationalyst", "agent") because the rationalyst prompt and
// the bare agent prompt are the same string.
struct GoldChainWorld {
  std::string question =
      "Natalia sold clips to 48 of her friends in April, and then she sold half as many clips in May. "
      "How many clips did Natalia sell altogether in April and May?";
  std::vector<std::string> gold = {"Natalia sold 48 / 2 = 24 clips in May.",
                                   "Natalia sold 48 + 24 = 72 clips altogether.", "The final answer is: 72"};
  std::vector<std::vector<std::string>> distractors = {
      {"Natalia sold 48 * 2 = 96 clips in May.", "Natalia sold 48 - 2 = 46 clips in May."},
      {"Natalia sold 48 * 24 = 1152 clips altogether.", "Natalia sold 48 - 24 = 24 clips altogether."},
      {"The final answer is: 1152", "The final answer is: 24"}};
  std::vector<std::string> rationales = {"Half of the April sales gives the May sales.",
                                         "Now we should calculate the sum of clips in April and May.",
                                         "The total answers the question."};
  std::vector<std::string> gold_keys = {"24", "72", "72"};
  std::vector<std::vector<std::string>> distractor_keys = {{"96", "46"}, {"1152"}, {"1152", "24"}};
  json fixture;

  Trajectory state(std::size_t i) const {
    Trajectory t(question);
    for (std::size_t k = 0; k < i; ++k) t.append(gold[k]);
    return t;
  }
};

inline GoldChainWorld gold_chain_world(bool shuffle) {
  GoldChainWorld w;
  json rat = json::array(), agent = json::array();
  json rules = json::array();
  for (std::size_t i = 0; i < 3; ++i) {
    auto t = w.state(i);
    const auto& d = w.distractors[i];
    rat.push_back({{"prompt", rationale::rationale_prompt(t)}, {"outputs", {w.rationales[i]}}});
    agent.push_back(
        {{"prompt", rationale::agent_prompt(t, "", nullptr)}, {"outputs", {d[0], w.gold[i], d[1]}}});
    agent.push_back(
        {{"prompt", rationale::agent_prompt(t, "", &w.rationales[i])}, {"outputs", {d[1], w.gold[i], d[0]}}});
    rules.push_back(prob_rule(w.rationales[i], w.gold_keys[i], 0.9));
    for (const auto& k : w.distractor_keys[i]) rules.push_back(prob_rule(w.rationales[i], k, 0.1));
  }
  w.fixture = {{"tokenizer", "word"},
               {"shuffle_completions", shuffle},
               {"default_outputs", {"The final answer is: 0"}},
               {"distribution", {{"rules", rules}, {"vocab_size", 1000}}},
               {"models", {{"rationalyst", {{"completions", rat}}}, {"agent", {{"completions", agent}}}}}};
  return w;
}

// ---------------------------------------------------------------------------
// Twenty one-step questions. Candidate order decides the greedy baseline:
// 14 list gold first (both arms right), 3 list it second (only the
// supervised arm right), 3 never offer it (both wrong). Expected accuracy:
// baseline 14/20, supervised 17/20.
struct ToySuite {
  json fixture;
  std::vector<rationale::TaskInstance> tasks;
  std::size_t baseline_correct = 14;
  std::size_t supervised_correct = 17;
};

inline ToySuite toy_suite() {
  ToySuite s;
  json rat = json::array(), agent = json::array();
  json rules = json::array();
  for (int j = 0; j < 20; ++j) {
    bool choice = j >= 15;
    std::string q = "Question " + std::to_string(j) + ": " +
                    (choice ? "which option names the largest planet? (A) Mars (B) Jupiter (C) Venus"
                            : "what is the total of item " + std::to_string(j) + "?");
    std::string r = "Rationale for question " + std::to_string(j) + ".";
    std::string gold, gold_tok;
    std::vector<std::string> wrong_toks;
    if (choice) {
      gold = "B";
      gold_tok = "(B)";
      wrong_toks = {"(A)", "(C)", "(D)"};
    } else {
      int g = j == 4 ? 1234 : 7 * j + 3;
      gold = std::to_string(g);
      gold_tok = j == 4 ? "1,234." : std::to_string(g);
      wrong_toks = {std::to_string(g + 1), std::to_string(g + 2), std::to_string(g + 3)};
    }
    auto step = [](const std::string& tok) { return "The final answer is: " + tok; };

    std::vector<std::string> outs;
    if (j % 7 == 3) {  // 3, 10, 17: supervision fixes the baseline
      outs = {step(wrong_toks[0]), step(gold_tok), step(wrong_toks[1])};
    } else if (j % 7 == 5) {  // 5, 12, 19: nobody can be right
      outs = {step(wrong_toks[0]), step(wrong_toks[1]), step(wrong_toks[2])};
    } else {
      outs = {step(gold_tok), step(wrong_toks[0]), step(wrong_toks[1])};
    }

    Trajectory t(q);
    rat.push_back({{"prompt", rationale::rationale_prompt(t)}, {"outputs", {r}}});
    agent.push_back({{"prompt", rationale::agent_prompt(t, "", nullptr)}, {"outputs", outs}});
    rules.push_back(prob_rule(r, gold_tok, 0.9));
    for (const auto& w : wrong_toks) rules.push_back(prob_rule(r, w, 0.1));
    s.tasks.push_back({"toy-" + std::to_string(j), q, gold, choice ? "commonsense" : "math", {}});
  }
  s.fixture = {{"tokenizer", "word"},
               {"default_outputs", {"I am not sure."}},
               {"distribution", {{"rules", rules}, {"vocab_size", 1000}}},
               {"models", {{"rationalyst", {{"completions", rat}}}, {"agent", {{"completions", agent}}}}}};
  return s;
}

// ---------------------------------------------------------------------------
// Random character-level scoring worlds for loss-oracle comparisons.
struct LossCase {
  json fixture;
  std::string preceding, rationale, following;
  double decay = 0.9;
  std::size_t horizon = 64;
};

inline std::string random_string(std::mt19937_64& rng, std::size_t lo, std::size_t hi, const std::string& alphabet) {
  std::uniform_int_distribution<std::size_t> len(lo, hi), pick(0, alphabet.size() - 1);
  std::string s;
  for (std::size_t n = len(rng); n > 0; --n) s.push_back(alphabet[pick(rng)]);
  return s;
}

inline LossCase random_loss_case(std::mt19937_64& rng) {
  LossCase c;
  std::uniform_real_distribution<double> prob(0.01, 1.0), decay(0.5, 1.0);
  std::uniform_int_distribution<int> nrules(0, 8), horizon(1, 100), coin(0, 1);
  json rules = json::array();
  for (int k = nrules(rng); k > 0; --k) {
    json r = {{"token", random_string(rng, 1, 1, "abcd")}, {"prob", prob(rng)}};
    if (coin(rng)) r["context_suffix"] = random_string(rng, 1, 2, "abcd ");
    rules.push_back(r);
  }
  c.fixture = {{"tokenizer", "char"}, {"distribution", {{"rules", rules}, {"vocab_size", 4}}}};
  c.preceding = random_string(rng, 0, 12, "abcd ");
  if (coin(rng)) c.preceding += "\n";
  c.rationale = coin(rng) ? random_string(rng, 1, 6, "abcd") : std::string();
  c.following = random_string(rng, 1, 90, "abcd");
  c.decay = decay(rng);
  c.horizon = static_cast<std::size_t>(horizon(rng));
  return c;
}

// ---------------------------------------------------------------------------
// 50 QA pairs, each annotated with two rationales; 10 of them state the
// gold answer in their first rationale.
struct LeakageWorld {
  json fixture;
  std::vector<rationale::QAPair> pairs;
  std::vector<bool> planted;
};

inline LeakageWorld leakage_world(const rationale::PromptTemplate& tpl) {
  LeakageWorld w;
  json completions = json::array();
  for (int j = 0; j < 50; ++j) {
    int boxes = j + 2, apples = 5 * boxes, gold = apples - 3;
    std::string s1 = "Tom has " + std::to_string(boxes) + " * 5 = " + std::to_string(apples) + " apples.";
    std::string s2 = "After eating he has " + std::to_string(apples) + " - 3 = " + std::to_string(gold) + " apples.";
    std::string s3 = "#### " + std::to_string(gold);
    rationale::QAPair p{"qa-" + std::to_string(j),
                        "Tom has " + std::to_string(boxes) + " boxes with 5 apples each. He eats 3. How many remain?",
                        s1 + "\n" + s2 + "\n" + s3, std::to_string(gold), "gsm8k"};
    bool leak = j % 5 == 0;
    std::string r1 = leak ? (j % 10 == 0 ? "So he ends with " + std::to_string(gold) + "." : "The answer is " + std::to_string(gold) + ".0 apples")
                          : "Next subtract the apples he ate.";
    std::string annotated = s1 + "\n<BOT>" + r1 + "<EOT>\n" + s2 + "\n<BOT>The result is the final count.<EOT>\n" + s3;
    completions.push_back({{"prompt", tpl.render({{"question", p.question}, {"answer", p.answer}})},
                           {"outputs", {annotated}}});
    w.pairs.push_back(p);
    w.planted.push_back(leak);
  }
  w.fixture = {{"completions", completions}};
  return w;
}

// ---------------------------------------------------------------------------
// 50 documents with scripted 4-d embeddings against the centroid (1, 0, 0, 0)
// built from two reference texts. Includes a document exactly at cosine 0.3,
// one just below, one at 2001 tokens and one at the 2000-token cap.
struct PrefilterWorld {
  json fixture;
  std::vector<rationale::Document> docs;
  std::vector<std::string> references = {"reference one", "reference two"};
  std::vector<std::vector<double>> vectors;  // per doc
  std::vector<double> centroid = {1, 0, 0, 0};
};

inline PrefilterWorld prefilter_world(std::uint64_t seed) {
  PrefilterWorld w;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> tokens(50, 2400);
  std::vector<std::string> sources = {"pile-cc", "stackexchange", "wikipedia"};
  json table = {{"reference one", {1.0, 1.0, 0.0, 0.0}}, {"reference two", {1.0, -1.0, 0.0, 0.0}}};
  for (int k = 0; k < 50; ++k) {
    std::vector<double> v;
    std::size_t tc = tokens(rng);
    switch (k) {
      case 0: v = {3, 9, 3, 1}; tc = 500; break;                         // cosine 3/10 exactly
      case 1: v = {29, std::sqrt(10000.0 - 841.0), 0, 0}; tc = 500; break;  // cosine 0.29
      case 2: v = {1, 0, 0, 0}; tc = 2001; break;
      case 3: v = {1, 0.1, 0, 0}; tc = 2000; break;
      default: v = {g(rng) + 0.5, g(rng), g(rng), g(rng)};
    }
    std::string text = "Document " + std::to_string(k) + " discusses why the premises imply the conclusion.";
    table[text] = v;
    w.vectors.push_back(v);
    w.docs.push_back({"doc-" + std::to_string(k), text, sources[static_cast<std::size_t>(k) % 3], tc});
  }
  w.fixture = {{"embedding", {{"dim", 4}, {"table", table}}}};
  return w;
}

// ---------------------------------------------------------------------------
// 100 labeled candidates (50 helpful, 50 unhelpful) whose filtration gains are
// scripted: following is one token with default p = 1/1000, raised to
// e^g / 1000 once the rationale is present, so gain = g.
struct CalibrationWorld {
  json fixture;
  std::vector<rationale::RationaleCandidate> candidates;
  std::vector<bool> helpful;
  std::vector<double> designed_gain;
};

inline CalibrationWorld calibration_world(std::uint64_t seed) {
  CalibrationWorld w;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> good(0.3, 3.0), bad(-1.0, 1.2);
  json rules = json::array();
  for (int i = 0; i < 100; ++i) {
    bool helpful = i % 2 == 0;
    double g = helpful ? good(rng) : bad(rng);
    rationale::RationaleCandidate c;
    c.source_id = "cal-" + std::to_string(i);
    c.doc_id = c.source_id;
    c.source = "gsm8k";
    c.origin = rationale::Origin::QADataset;
    c.position = 1;
    c.preceding = "Context number " + std::to_string(i) + ". ";
    c.rationale = "Rationale number " + std::to_string(i) + ".";
    c.following = "Outcome_" + std::to_string(i);
    c.gold_final = "none";
    rules.push_back(prob_rule(c.rationale, c.following, std::exp(g) / 1000.0));
    w.candidates.push_back(c);
    w.helpful.push_back(helpful);
    w.designed_gain.push_back(g);
  }
  w.fixture = {{"distribution", {{"rules", rules}, {"vocab_size", 1000}}}};
  return w;
}

}  // namespace worlds
