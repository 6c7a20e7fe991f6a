#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "toy.hpp"

using namespace csc;
using csc::testing::S;
using csc::testing::U;

namespace {

std::u32string random_input(std::mt19937& rng, std::size_t max_len) {
  const auto alphabet = csc::testing::toy_alphabet();
  std::u32string x;
  for (std::size_t n = 1 + rng() % max_len; n > 0; --n) x.push_back(alphabet[rng() % alphabet.size()]);
  return x;
}

const Engine& engine() {
  static const Engine e = csc::testing::toy_engine();
  return e;
}

}  // namespace

TEST(StepScore, NoRewardsIsPlainSum) {
  BeamCandidate prev;
  prev.score = -3.25;
  DecoderConfig cfg;
  cfg.length_reward = false;
  cfg.faithfulness_reward = false;
  EXPECT_DOUBLE_EQ(step_score(prev, U"施工单位", -4.0, 0.7, -0.5, cfg), -3.25 - 4.0 - 0.5);
}

TEST(StepScore, SingleCharacterHasNoLengthReward) {
  BeamCandidate prev;
  DecoderConfig cfg;
  cfg.faithfulness_reward = false;
  for (double alpha : {0.0, 2.5, 100.0}) {
    cfg.alpha = alpha;
    EXPECT_DOUBLE_EQ(step_score(prev, U"机", -1.0, 0.3, -0.2, cfg), -1.2);
  }
}

TEST(StepScore, FullEntropyThreeCharacterToken) {
  BeamCandidate prev;
  prev.score = -1.0;
  const double lm = -2.0;
  const double dm = 3 * std::log(0.962);
  const double expected = -1.0 + lm + 2.0 * (3 * -0.038740828316430595 + 5.0);
  EXPECT_NEAR(step_score(prev, U"施工单", lm, 1.0, dm, DecoderConfig{}), expected, 1e-12);
}

TEST(StepScore, MultiplierStaysWithinOneAndTwo) {
  DecoderConfig cfg;
  EXPECT_EQ(faithfulness_multiplier(-0.5, cfg), 1.0);
  EXPECT_EQ(faithfulness_multiplier(0.25, cfg), 1.25);
  EXPECT_EQ(faithfulness_multiplier(3.0, cfg), 2.0);
  cfg.faithfulness_reward = false;
  EXPECT_EQ(faithfulness_multiplier(0.9, cfg), 1.0);
}

TEST(StepScore, LengthRewardScalesWithAlpha) {
  DecoderConfig cfg;
  cfg.alpha = 1.5;
  EXPECT_EQ(length_reward(1, cfg), 0.0);
  EXPECT_EQ(length_reward(4, cfg), 4.5);
  cfg.length_reward = false;
  EXPECT_EQ(length_reward(4, cfg), 0.0);
}

TEST(DecoderConfig, RejectsBadValues) {
  DecoderConfig cfg;
  cfg.beam_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.alpha = -1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.candidate_cap = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(BeamOrder, ScoreThenTokensThenText) {
  EXPECT_TRUE(beam_before(-1, 3, U"b", -2, 1, U"a"));
  EXPECT_TRUE(beam_before(-1, 1, U"b", -1, 2, U"a"));
  EXPECT_TRUE(beam_before(-1, 2, U"a", -1, 2, U"b"));
  EXPECT_FALSE(beam_before(-1, 2, U"a", -1, 2, U"a"));
}

TEST(Decoder, RepairsSplitCompound) {
  const auto r = engine().correct(U"要求师公单位对机构");
  EXPECT_NE(r.output.find(U"施工单位"), std::u32string::npos) << S(r.output);
  EXPECT_EQ(r.output.size(), 9u);
}

TEST(Decoder, EmptyInputIsAnError) {
  EXPECT_THROW(engine().correct(U""), Error);
}

TEST(Decoder, MatchesExhaustiveSearch) {
  std::mt19937 rng(11);
  DecoderConfig cfg;
  cfg.beam_size = 64;
  const auto& e = engine();
  for (int i = 0; i < 60; ++i) {
    const auto x = random_input(rng, 5);
    const auto got = e.correct(x, cfg);
    const auto want = csc::testing::exhaustive_decode(e.knowledge_base(), e.tables(), e.params(), e.language_model(),
                                                      csc::testing::toy_tokens(), x, cfg);
    EXPECT_EQ(got.output, want.output) << S(x);
    EXPECT_NEAR(got.score, want.score, 1e-9) << S(x);
  }
}

TEST(Decoder, NarrowBeamNeverBeatsExactSearch) {
  std::mt19937 rng(12);
  DecoderConfig wide;
  wide.beam_size = 64;
  for (int i = 0; i < 40; ++i) {
    const auto x = random_input(rng, 6);
    const double best = engine().correct(x, wide).score;
    for (std::size_t k : {1u, 2u, 4u, 8u}) {
      DecoderConfig narrow;
      narrow.beam_size = k;
      EXPECT_LE(engine().correct(x, narrow).score, best + 1e-9) << S(x) << " K=" << k;
    }
  }
}

TEST(Decoder, Deterministic) {
  std::mt19937 rng(13);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_input(rng, 8);
    const auto a = engine().correct(x);
    const auto b = engine().correct(x);
    EXPECT_EQ(a.output, b.output);
    EXPECT_EQ(a.score, b.score);
    EXPECT_EQ(a.steps.size(), b.steps.size());
  }
}

TEST(Decoder, PreservesLengthAndUnknownCharacters) {
  std::mt19937 rng(14);
  const std::u32string pool = U"机器施工单位要求对A7 ,。😀ｘ";
  for (int i = 0; i < 50; ++i) {
    std::u32string x;
    for (std::size_t n = 1 + rng() % 12; n > 0; --n) x.push_back(pool[rng() % pool.size()]);
    const auto r = engine().correct(x);
    ASSERT_EQ(r.output.size(), x.size()) << S(x);
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (engine().knowledge_base().lookup(x[k]) == nullptr) { EXPECT_EQ(r.output[k], x[k]) << S(x); }
    }
  }
}

TEST(Decoder, TraceInvariants) {
  std::mt19937 rng(15);
  for (int i = 0; i < 30; ++i) {
    const auto x = random_input(rng, 8);
    const auto r = engine().correct(x);
    std::size_t pos = 0;
    double lm = 0, dm = 0, lr = 0;
    for (const auto& s : r.steps) {
      EXPECT_EQ(s.char_pos, pos);
      pos += s.token.size();
      EXPECT_GE(s.multiplier, 1.0);
      EXPECT_LE(s.multiplier, 2.0);
      lm += s.lm_logprob;
      dm += s.dm_score;
      lr += s.length_reward;
    }
    EXPECT_EQ(pos, x.size());
    EXPECT_DOUBLE_EQ(r.breakdown.lm_sum, lm);
    EXPECT_DOUBLE_EQ(r.breakdown.dm_sum, dm);
    EXPECT_DOUBLE_EQ(r.breakdown.length_reward_sum, lr);
    ASSERT_FALSE(r.steps.empty());
    EXPECT_EQ(r.steps.back().score, r.score);
  }
}

TEST(Decoder, PlainScoreIsLmPlusChannel) {
  DecoderConfig cfg;
  cfg.length_reward = false;
  cfg.faithfulness_reward = false;
  std::mt19937 rng(16);
  for (int i = 0; i < 30; ++i) {
    const auto r = engine().correct(random_input(rng, 8), cfg);
    EXPECT_NEAR(r.score, r.breakdown.lm_sum + r.breakdown.dm_sum, 1e-9);
  }
}

TEST(Decoder, IdentityChannelCopies) {
  const auto e = csc::testing::toy_engine(DistortionParams::identity_only());
  std::mt19937 rng(17);
  for (int i = 0; i < 40; ++i) {
    auto x = random_input(rng, 10);
    // Interchangeable pairs count as Identical, so leave them out here.
    std::erase_if(x, [](char32_t c) { return c == U'的' || c == U'地' || c == U'得'; });
    if (x.empty()) continue;
    EXPECT_EQ(e.correct(x).output, x) << S(x);
  }
}

TEST(Decoder, CapOfOneKeepsTheCopy) {
  DecoderConfig cfg;
  cfg.candidate_cap = 1;
  for (const auto& x : {U"要求师公单位", U"七器人", U"机构"}) {
    EXPECT_EQ(engine().correct(x, cfg).output, x);
    const auto step = engine().step_candidates(x, 0, cfg);
    ASSERT_EQ(step.size(), 1u);
    EXPECT_EQ(step[0].first, std::u32string(1, x[0]));
  }
}

TEST(Decoder, CandidatesAlwaysIncludeIdentity) {
  const std::u32string x = U"A师😀";
  for (std::size_t pos = 0; pos < x.size(); ++pos) {
    const auto step = engine().step_candidates(x, pos, DecoderConfig{});
    EXPECT_TRUE(std::any_of(step.begin(), step.end(), [&](const auto& c) {
      return c.first == std::u32string(1, x[pos]);
    }));
    for (const auto& [text, dm] : step) EXPECT_TRUE(std::isfinite(dm));
  }
}

TEST(Replay, ReproducesDecodedPath) {
  std::mt19937 rng(18);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_input(rng, 8);
    const auto r = engine().correct(x);
    std::vector<std::u32string> tokens;
    for (const auto& s : r.steps) tokens.push_back(s.token);
    const auto again = engine().replay(x, tokens);
    EXPECT_EQ(again.output, r.output);
    EXPECT_NEAR(again.score, r.score, 1e-12);
  }
}

TEST(Replay, RejectsPartialCover) {
  const std::vector<std::u32string> tokens = {U"机"};
  EXPECT_THROW(engine().replay(U"机构", tokens), Error);
}

TEST(Replay, KnowledgeOnlyMovesLanguageModelTerm) {
  const std::u32string x = U"要求师公单位";
  const std::vector<std::u32string> tokens = {U"要求", U"施工单位"};
  DecoderConfig knowing;
  knowing.knowledge_prefix = U"机器的";
  const auto a = engine().replay(x, tokens);
  const auto b = engine().replay(x, tokens, knowing);
  EXPECT_EQ(a.breakdown.dm_sum, b.breakdown.dm_sum);
  EXPECT_EQ(a.breakdown.length_reward_sum, b.breakdown.length_reward_sum);
  EXPECT_NE(a.breakdown.lm_sum, b.breakdown.lm_sum);
}

TEST(CorrectBatch, EmptyListGivesEmptyList) {
  EXPECT_TRUE(correct_batch(engine(), std::vector<std::u32string>{}).empty());
}

TEST(CorrectBatch, SingleItemMatchesCorrect) {
  const std::vector<std::u32string> one = {U"机"};
  const auto batch = correct_batch(engine(), one);
  ASSERT_EQ(batch.size(), 1u);
  ASSERT_TRUE(batch[0].result);
  EXPECT_EQ(batch[0].result->output, correct(engine(), U"机").output);
}

TEST(CorrectBatch, MatchesSequentialCalls) {
  std::mt19937 rng(19);
  std::vector<std::u32string> xs;
  for (int i = 0; i < 100; ++i) xs.push_back(random_input(rng, 8));
  for (unsigned threads : {1u, 4u}) {
    const auto batch = engine().correct_batch(xs, DecoderConfig{}, threads);
    ASSERT_EQ(batch.size(), xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      ASSERT_TRUE(batch[i].result);
      const auto one = engine().correct(xs[i]);
      EXPECT_EQ(batch[i].result->output, one.output);
      EXPECT_EQ(batch[i].result->score, one.score);
    }
  }
}

TEST(CorrectBatch, FailuresStayPerItem) {
  const std::vector<std::u32string> xs = {U"机构", U"", U"七器人"};
  const auto batch = engine().correct_batch(xs);
  ASSERT_EQ(batch.size(), 3u);
  EXPECT_TRUE(batch[0].result);
  EXPECT_FALSE(batch[1].result);
  EXPECT_FALSE(batch[1].error.empty());
  EXPECT_TRUE(batch[2].result);
}
