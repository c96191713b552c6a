#include <gtest/gtest.h>

#include <random>

#include "rationale/emitter.hpp"
#include "support/harness.hpp"

using namespace rationale;

namespace {

RationaleCandidate cand(std::string sid, std::size_t pos, std::string pre, std::string r, std::string source = "pile",
                        Origin origin = Origin::Corpus, std::string gold = "") {
  RationaleCandidate c;
  c.source_id = std::move(sid);
  c.doc_id = c.source_id;
  c.position = pos;
  c.preceding = std::move(pre);
  c.rationale = std::move(r);
  c.following = "rest";
  c.source = std::move(source);
  c.origin = origin;
  c.gold_final = std::move(gold);
  return c;
}

}  // namespace

TEST(Emit, ContextIsPrecedingTargetIsRationale) {
  auto res = emit({cand("b", 1, "B pre. ", "why b"), cand("a", 2, "A pre. A2. ", "why a2"), cand("a", 1, "A pre. ", "why a")});
  ASSERT_EQ(res.examples.size(), 3u);
  EXPECT_EQ(res.examples[0].source_id, "a");
  EXPECT_EQ(res.examples[0].context, "A pre. ");
  EXPECT_EQ(res.examples[0].target, "why a");
  EXPECT_EQ(res.examples[1].target, "why a2");
  EXPECT_EQ(res.examples[2].source_id, "b");
  EXPECT_TRUE(res.report.conserved());
}

TEST(Emit, DuplicatesCollapsed) {
  auto res = emit({cand("a", 1, "same ", "r"), cand("b", 1, "same ", "r"), cand("c", 1, "same ", "other")});
  EXPECT_EQ(res.report.emitted, 2u);
  EXPECT_EQ(res.report.duplicates, 1u);
  EXPECT_TRUE(res.report.conserved());
}

TEST(Emit, LeakedQaTargetsNeverEmitted) {
  auto res = emit({cand("q", 1, "Q ", "the answer is 72", "gsm8k", Origin::QADataset, "72"),
                   cand("q", 2, "Q ", "add them", "gsm8k", Origin::QADataset, "72"),
                   cand("d", 1, "D ", "mentions 72 but corpus", "pile")});
  EXPECT_EQ(res.report.leaked, 1u);
  EXPECT_EQ(res.report.emitted, 2u);
  for (const auto& e : res.examples) EXPECT_EQ(e.target.find("answer is 72"), std::string::npos);
  EXPECT_TRUE(res.report.conserved());
}

TEST(Emit, ShuffleInvariant) {
  std::vector<RationaleCandidate> cs;
  for (int i = 0; i < 40; ++i) cs.push_back(cand("s" + std::to_string(i % 7), static_cast<std::size_t>(i), "p" + std::to_string(i) + " ", "r" + std::to_string(i % 5)));
  auto base = emit(cs);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    std::shuffle(cs.begin(), cs.end(), rng);
    EXPECT_EQ(emit(cs).examples, base.examples);
  }
}

TEST(Emit, LeftTruncationKeepsTail) {
  EmitOptions o;
  o.max_context_tokens = 3;
  o.count_tokens = [](std::string_view s) { return text::word_count(s); };
  auto res = emit({cand("a", 1, "one two three four five ", "r")}, o);
  ASSERT_EQ(res.examples.size(), 1u);
  EXPECT_EQ(res.examples[0].context, "three four five ");
}

TEST(Emit, JsonRoundTrip) {
  TrainingExample e{"ctx", "tgt", Origin::QADataset, "id1"};
  auto j = to_json(e);
  EXPECT_EQ(j["origin"], "qa");
  EXPECT_EQ(example_from_json(j), e);
}

TEST(Stats, TableOneRows) {
  std::vector<SourceTally> t = {{"GSM8K", 7473, 17566, 3425, 1.2}, {"ECQA", 7598, 19669, 11329, 0.5}};
  auto rep = stats(t);
  EXPECT_EQ(rep.rows[0].pct_left_text(), "19.5");
  EXPECT_EQ(rep.rows[1].pct_left_text(), "57.6");
  EXPECT_EQ(rep.rows[0].tau_text(), "1.2");
  EXPECT_EQ(rep.rows[1].tau_text(), "0.5");
}

TEST(Stats, FromCandidateLists) {
  std::vector<RationaleCandidate> before = {cand("a", 1, "x", "1", "pile"), cand("a", 2, "x", "2", "pile"),
                                            cand("b", 1, "x", "3", "pile"), cand("q", 1, "x", "4", "gsm8k")};
  std::vector<RationaleCandidate> after = {before[0]};
  auto rep = stats(before, after, {{"ecqa", 5}}, {{"pile", 0.0}});
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.rows[0].source, "ecqa");
  EXPECT_EQ(rep.rows[0].pct_left_text(), "-");
  EXPECT_EQ(rep.rows[2].source, "pile");
  EXPECT_EQ(rep.rows[2].docs, 2u);
  EXPECT_EQ(rep.rows[2].pct_left_text(), "33.3");
  EXPECT_EQ(rep.rows[2].tau_text(), "0");
  EXPECT_EQ(rep.rows[1].pct_left_text(), "0.0");
}
