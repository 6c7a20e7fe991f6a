#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "test_support.hpp"

using namespace csc;
using csc::testing::U;

namespace {

NGramModel train_text(const std::string& text, int n, std::vector<std::u32string> lexicon = {}) {
  std::istringstream in(text);
  return NGramModel::train(in, n, std::move(lexicon));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const NGramModel& small_model() {
  static const NGramModel m = train_text(
      "要求施工单位对工程质量负责\n施工单位要求机构改革\n机构对单位提出要求\n工程机器\n", 3,
      {U"施工", U"单位", U"施工单位", U"机构", U"要求", U"工程"});
  return m;
}

}  // namespace

TEST(FlattenPrefix, Concatenates) {
  const std::vector<std::u32string> none;
  const std::vector<std::u32string> one = {U"要求"};
  const std::vector<std::u32string> two = {U"未"};
  EXPECT_EQ(flatten_prefix(U"", one), U"要求");
  EXPECT_EQ(flatten_prefix(U"患者提问：", two), U"患者提问：未");
  EXPECT_EQ(flatten_prefix(U"", none), U"");
}

TEST(NGram, HandComputedBigram) {
  const auto m = train_text("abab\n", 2);
  // Alphabet {a, b, unk}. Bigram counts: <s>->a 1, a->b 2, b->a 1, so
  // n1=2, n2=1, D2=2/(2+2)=0.5. Unigram level counts distinct left
  // neighbours: a has {<s>, b}, b has {a}, so n1=1, n2=1, D1=1/3.
  const double p0 = 1.0 / 3.0;
  const double d1 = 1.0 / 3.0;
  const double p1_b = (1 - d1) / 3 + d1 * 2 / 3 * p0;
  const double p2_b_a = (2 - 0.5) / 2 + 0.5 * 1 / 2 * p1_b;
  EXPECT_NEAR(p1_b, 8.0 / 27.0, 1e-15);
  EXPECT_NEAR(p2_b_a, 0.8240740741, 1e-9);
  EXPECT_NEAR(m.char_prob(U"a", U'b'), p2_b_a, 1e-15);
  EXPECT_EQ(m.alphabet_size(), 3u);
  ASSERT_EQ(m.discounts().size(), 2u);
  EXPECT_NEAR(m.discounts()[0], d1, 1e-15);
  EXPECT_EQ(m.discounts()[1], 0.5);
  // Unknown characters share the unknown symbol's backoff mass.
  EXPECT_EQ(m.char_prob(U"a", U'z'), m.char_prob(U"a", U'q'));
}

TEST(NGram, SingleCharacterCorpus) {
  const auto m = train_text("aaaa\n", 2);
  EXPECT_EQ(m.alphabet_size(), 2u);
  const double pa = m.char_prob(U"a", U'a');
  const double pu = m.char_prob(U"a", U'x');
  EXPECT_NEAR(pa + pu, 1.0, 1e-12);
  EXPECT_GT(pa, 0.9);
  EXPECT_GT(pu, 0.0);
}

TEST(NGram, DistributionsSumToOne) {
  const auto& m = small_model();
  std::mt19937 rng(3);
  const std::u32string chars = U"要求施工单位对机构工程XY";
  std::uniform_int_distribution<std::size_t> pick(0, chars.size() - 1);
  for (int i = 0; i < 200; ++i) {
    std::u32string h;
    for (int k = static_cast<int>(rng() % 6); k > 0; --k) h.push_back(chars[pick(rng)]);
    const auto d = m.distribution(h);
    double sum = 0;
    for (double v : d) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    const double e = m.normalized_entropy(h);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
  }
}

TEST(NGram, EntropyIsNormalizedByAlphabet) {
  const auto& m = small_model();
  const auto d = m.distribution(U"施工");
  double h = 0;
  for (double v : d) h -= v * std::log(v);
  EXPECT_NEAR(m.normalized_entropy(U"施工"), h / std::log(static_cast<double>(d.size())), 1e-12);
}

TEST(NGram, ChainRule) {
  const auto& m = small_model();
  const std::vector<std::u32string> prefix = {U"要求"};
  LMQuery whole{U"", prefix, {U"施工单位", U"工"}};
  const auto r = m.next_token_logprobs(whole);
  double sum = 0.0;
  std::vector<std::u32string> running = prefix;
  for (char32_t c : std::u32string(U"施工单位")) {
    const auto step = m.next_token_logprobs({U"", running, {std::u32string(1, c)}});
    sum += step.logprobs[0];
    running.push_back(std::u32string(1, c));
  }
  EXPECT_EQ(r.logprobs[0], sum);
  EXPECT_EQ(r.logprobs[1], m.next_token_logprobs({U"", prefix, {U"工"}}).logprobs[0]);
  for (double v : r.logprobs) EXPECT_LE(v, 0.0);
}

TEST(NGram, KnowledgePrefixIsContext) {
  const auto& m = small_model();
  const auto a = m.next_token_logprobs({U"要求", {}, {U"施工"}});
  const auto b = m.next_token_logprobs({U"", {U"要求"}, {U"施工"}});
  EXPECT_EQ(a.logprobs, b.logprobs);
  EXPECT_EQ(a.entropy, b.entropy);
}

TEST(NGram, VocabularyExposesCharsAndLexicon) {
  const auto v = small_model().vocabulary();
  EXPECT_NE(std::find(v.begin(), v.end(), U"施工单位"), v.end());
  EXPECT_NE(std::find(v.begin(), v.end(), U"施"), v.end());
  EXPECT_TRUE(small_model().concurrency_safe());
}

TEST(NGram, SaveLoadRoundTrip) {
  csc::testing::TempDir dir;
  const auto& m = small_model();
  m.save(dir / "m1.txt");
  const auto loaded = NGramModel::load(dir / "m1.txt");
  loaded.save(dir / "m2.txt");
  EXPECT_EQ(slurp(dir / "m1.txt"), slurp(dir / "m2.txt"));
  for (const auto& h : {U"", U"施工", U"要求施", U"XYZ"}) {
    for (char32_t c : std::u32string(U"施工单位X")) EXPECT_EQ(m.char_prob(h, c), loaded.char_prob(h, c));
  }
  EXPECT_EQ(loaded.lexicon(), m.lexicon());
}

TEST(NGram, RetrainIsBitwiseIdentical) {
  csc::testing::TempDir dir;
  const std::string text = "要求施工单位\n机构改革\n";
  train_text(text, 4).save(dir / "a.txt");
  train_text(text, 4).save(dir / "b.txt");
  EXPECT_EQ(slurp(dir / "a.txt"), slurp(dir / "b.txt"));
}

TEST(NGram, Errors) {
  EXPECT_THROW(train_text("", 2), Error);
  EXPECT_THROW(train_text("\n\n", 2), Error);
  EXPECT_THROW(train_text("ab\n", 1), Error);
  std::istringstream bad("#csc-ngram v2\n");
  EXPECT_THROW(NGramModel::load(bad, "bad"), ParseError);
  std::istringstream truncated("#csc-ngram v1\norder 2\n");
  EXPECT_THROW(NGramModel::load(truncated, "bad"), ParseError);
  EXPECT_THROW(NGramModel::load("/nonexistent/model"), LoadError);
}
