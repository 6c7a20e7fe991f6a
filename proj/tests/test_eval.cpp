#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "toy.hpp"

using namespace csc;
using csc::testing::U;

namespace {

std::vector<EvalTriple> four_sentences() {
  return {
      {U"师公单位", U"施工单位", U"施工单位"},
      {U"七器人", U"七器人", U"机器人"},
      {U"要求对", U"要求的", U"要求对"},
      {U"机构", U"机构", U"机构"},
  };
}

std::u32string random_string(std::mt19937& rng, std::size_t len, std::u32string_view pool) {
  std::u32string s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(pool[rng() % pool.size()]);
  return s;
}

// Substitutions only, so positional comparison is a valid alignment.
std::u32string substitute(std::mt19937& rng, std::u32string s, double rate, std::u32string_view pool) {
  std::bernoulli_distribution flip(rate);
  for (auto& c : s) {
    if (flip(rng)) c = pool[rng() % pool.size()];
  }
  return s;
}

std::vector<EvalTriple> random_triples(std::mt19937& rng, std::size_t n) {
  const std::u32string pool = U"机器施工单位要求对";
  std::vector<EvalTriple> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto target = random_string(rng, 3 + rng() % 8, pool);
    auto source = substitute(rng, target, 0.2, pool);
    auto prediction = rng() % 3 == 0 ? random_string(rng, 2 + rng() % 9, pool) : substitute(rng, source, 0.2, pool);
    out.push_back({source, prediction, target});
  }
  return out;
}

}  // namespace

TEST(Normalize, DropsSpacesAndFoldsFullWidth) {
  EXPECT_EQ(normalize_for_eval(U"你 好 ，世界"), U"你好,世界");
  EXPECT_EQ(normalize_for_eval(U""), U"");
  EXPECT_EQ(normalize_for_eval(U"Ａｂ１！　～\t\n"), U"Ab1!~");
  EXPECT_EQ(normalize_for_eval(U"。、"), U"。、");
}

TEST(Normalize, Idempotent) {
  std::mt19937 rng(1);
  const std::u32string pool = U"你好 ，,。！!Ａa　\t～1１";
  for (int i = 0; i < 200; ++i) {
    const auto once = normalize_for_eval(random_string(rng, rng() % 12, pool));
    EXPECT_EQ(normalize_for_eval(once), once);
  }
}

TEST(SentenceMetrics, FourSentenceFixture) {
  const auto s = sentence_metrics(four_sentences());
  EXPECT_EQ(s.p, 0.5);
  EXPECT_EQ(s.r, 0.5);
  EXPECT_EQ(s.f, 0.5);
  EXPECT_EQ(s.correct, 1u);
  EXPECT_EQ(s.predicted, 2u);
  EXPECT_EQ(s.needed, 2u);
}

TEST(SentenceMetrics, NoErrorsAnywhere) {
  const std::vector<EvalTriple> t = {{U"机构", U"机构", U"机构"}};
  const auto s = sentence_metrics(t);
  EXPECT_EQ(s.p, 0.0);
  EXPECT_EQ(s.r, 0.0);
  EXPECT_EQ(s.f, 0.0);
}

TEST(SentenceMetrics, AllFixed) {
  const std::vector<EvalTriple> t = {{U"师公", U"施工", U"施工"}, {U"七器", U"机器", U"机器"}};
  EXPECT_EQ(sentence_metrics(t).f, 1.0);
}

TEST(Levenshtein, KnownDistances) {
  EXPECT_EQ(levenshtein(U"kitten", U"sitting"), 3u);
  EXPECT_EQ(levenshtein(U"", U"abc"), 3u);
  EXPECT_EQ(levenshtein(U"机器", U"机器"), 0u);
  EXPECT_EQ(levenshtein(U"机器人", U"器人机"), 2u);
}

TEST(AlignEdits, BacktraceIsDeterministic) {
  const auto e = align_edits(U"ab", U"ba");
  // Equal length but Hamming 2 == Levenshtein 2: positional.
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].op, EditOp::Substitute);
  const auto ins = align_edits(U"ab", U"axxb");
  ASSERT_EQ(ins.size(), 2u);
  EXPECT_EQ(ins[0].op, EditOp::Insert);
  EXPECT_EQ(ins[0].pos, 1u);
  EXPECT_EQ(ins[0].ordinal, 0u);
  EXPECT_EQ(ins[1].ordinal, 1u);
  const auto del = align_edits(U"abc", U"ac");
  ASSERT_EQ(del.size(), 1u);
  EXPECT_EQ(del[0].op, EditOp::Delete);
  EXPECT_EQ(del[0].pos, 1u);
}

TEST(CharMetrics, FourSentenceFixture) {
  const auto c = char_metrics(four_sentences());
  EXPECT_EQ(c.correct, 2u);
  EXPECT_EQ(c.predicted, 3u);
  EXPECT_EQ(c.needed, 3u);
  EXPECT_EQ(c.p, 2.0 / 3.0);
}

TEST(CharMetrics, OneOfTwoErrorsFixed) {
  const std::vector<EvalTriple> t = {{U"七器师工", U"机器师工", U"机器施工"}};
  const auto c = char_metrics(t);
  EXPECT_EQ(c.p, 1.0);
  EXPECT_EQ(c.r, 0.5);
}

TEST(CharMetrics, UntouchedPrediction) {
  const std::vector<EvalTriple> t = {{U"七器", U"七器", U"机器"}};
  const auto c = char_metrics(t);
  EXPECT_EQ(c.predicted, 0u);
  EXPECT_EQ(c.p, 0.0);
  EXPECT_EQ(c.r, 0.0);
}

TEST(CharMetrics, SpuriousInsertionDoesNotCascade) {
  const std::vector<EvalTriple> t = {{U"七器人工作", U"机器人X工作", U"机器人工作"}};
  const auto c = char_metrics(t);
  EXPECT_EQ(c.correct, 1u);
  EXPECT_EQ(c.predicted, 2u);
  EXPECT_EQ(c.needed, 1u);
}

TEST(CharMetrics, MatchesPositionalComparison) {
  std::mt19937 rng(2);
  const std::u32string pool = U"机器施工单位要求";
  std::size_t checked = 0;
  for (int i = 0; i < 300; ++i) {
    const auto target = random_string(rng, 2 + rng() % 10, pool);
    const auto source = substitute(rng, target, 0.25, pool);
    const auto prediction = substitute(rng, source, 0.25, pool);
    auto hamming = [](std::u32string_view a, std::u32string_view b) {
      std::size_t h = 0;
      for (std::size_t k = 0; k < a.size(); ++k) h += a[k] != b[k];
      return h;
    };
    if (hamming(source, target) != levenshtein(source, target) ||
        hamming(source, prediction) != levenshtein(source, prediction)) {
      continue;
    }
    ++checked;
    std::uint64_t correct = 0, predicted = 0, needed = 0;
    for (std::size_t k = 0; k < source.size(); ++k) {
      needed += target[k] != source[k];
      predicted += prediction[k] != source[k];
      correct += prediction[k] != source[k] && prediction[k] == target[k];
    }
    const std::vector<EvalTriple> t = {{source, prediction, target}};
    const auto c = char_metrics(t);
    EXPECT_EQ(c.correct, correct);
    EXPECT_EQ(c.predicted, predicted);
    EXPECT_EQ(c.needed, needed);
  }
  EXPECT_GT(checked, 100u);
}

TEST(Fpr, Counts) {
  EXPECT_EQ(fpr(std::vector<EvalTriple>{{U"七", U"机", U"机"}}), 0.0);
  EXPECT_EQ(fpr(std::vector<EvalTriple>{{U"机", U"基", U"机"}, {U"构", U"构", U"构"}, {U"七", U"机", U"机"}}), 0.5);
  EXPECT_EQ(fpr(std::vector<EvalTriple>{{U"机", U"机", U"机"}, {U"七", U"七", U"机"}}), 0.0);
  EXPECT_EQ(fpr(four_sentences()), 0.5);
}

TEST(Cer, HandCounted) {
  const std::vector<EvalTriple> t = {{U"", U"七器施工单位要求对", U"机器施工单位要求对口"}};
  EXPECT_DOUBLE_EQ(cer(t), 0.2);
  EXPECT_EQ(cer(std::vector<EvalTriple>{{U"七", U"机", U"机"}}), 0.0);
  EXPECT_DOUBLE_EQ(cer(four_sentences()), 2.0 / 12.0);
}

TEST(Cerr, RelativeReduction) {
  EXPECT_NEAR(cerr(4.83, 3.29), 0.319, 0.001);
  EXPECT_EQ(cerr(0.5, 0.5), 0.0);
  EXPECT_THROW(cerr(0.0, 0.1), Error);
}

TEST(RecallBound, Fixtures) {
  const auto& kb = csc::testing::shipped_kb();
  const auto& tables = csc::testing::shipped_tables();
  const std::vector<EvalPair> same = {{U"机构", U"机构"}, {U"ABC", U"ABC"}};
  EXPECT_EQ(recall_upper_bound(kb, tables, same), 1.0);
  const std::vector<EvalPair> fig = {{U"师公", U"施工"}};
  EXPECT_EQ(recall_upper_bound(kb, tables, fig), 1.0);
  const std::vector<EvalPair> mixed = {
      {U"师公单位", U"施工单位"}, {U"机构", U"机构"}, {U"七器人", U"机器人"}, {U"人口", U"人水"}};
  ASSERT_EQ(classify(kb, tables, U'水', U'口'), DistortionType::Unrelated);
  const auto b = recall_upper_bound_counts(kb, tables, mixed);
  EXPECT_EQ(b.value, 0.75);
  EXPECT_EQ(b.reachable, 3u);
  const std::vector<EvalPair> bad = {{U"机构", U"机构"}, {U"机", U"机构"}};
  try {
    recall_upper_bound(kb, tables, bad);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("pair 1"), std::string::npos);
  }
}

TEST(Filter, LengthMismatch) {
  EXPECT_EQ(filter_length_mismatch(four_sentences()).kept.size(), 4u);
  EXPECT_TRUE(filter_length_mismatch(std::vector<EvalTriple>{}).kept.empty());
  const std::vector<EvalTriple> t = {{U"机构", U"机构", U"机构"}, {U"机构", U"机构人", U"机构"}, {U"人 口", U"人口", U"人口"}};
  const auto r = filter_length_mismatch(t);
  EXPECT_EQ(r.kept.size(), 2u);
  EXPECT_EQ(r.dropped, 1u);
}

TEST(Properties, RangesAndHarmonicMean) {
  std::mt19937 rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto t = random_triples(rng, 1 + rng() % 10);
    for (const auto& m : {sentence_metrics(t), char_metrics(t)}) {
      for (double v : {m.p, m.r, m.f}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      EXPECT_EQ(m.f == 0.0, m.p + m.r == 0.0);
      if (m.p + m.r > 0) { EXPECT_NEAR(m.f, 2 * m.p * m.r / (m.p + m.r), 1e-15); }
    }
    EXPECT_GE(fpr(t), 0.0);
    EXPECT_LE(fpr(t), 1.0);
  }
}

TEST(Properties, PermutationInvariant) {
  std::mt19937 rng(4);
  auto t = random_triples(rng, 40);
  const auto a = evaluate(t).to_json();
  std::shuffle(t.begin(), t.end(), rng);
  EXPECT_EQ(evaluate(t).to_json(), a);
}

TEST(Evaluate, ReportFieldsAndCounts) {
  const auto r = evaluate(four_sentences(), &csc::testing::shipped_kb(), &csc::testing::shipped_tables());
  const auto j = r.to_json();
  for (const char* k : {"s_p", "s_r", "s_f", "c_p", "c_r", "c_f", "fpr", "cer", "cerr", "recall_upper_bound"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j["s_f"], 0.5);
  EXPECT_EQ(j["counts"]["sentences"], 4);
  EXPECT_DOUBLE_EQ(r.cer.cer, 2.0 / 12.0);
  EXPECT_DOUBLE_EQ(r.baseline_cer.cer, 3.0 / 12.0);
  EXPECT_NEAR(r.cerr, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(j["recall_upper_bound"], 1.0);
}

TEST(Evaluate, EngineOutputSurvivesFilter) {
  const auto engine = csc::testing::toy_engine();
  std::mt19937 rng(5);
  std::vector<EvalTriple> t;
  const auto alphabet = csc::testing::toy_alphabet();
  for (int i = 0; i < 30; ++i) {
    const auto x = random_string(rng, 1 + rng() % 8, alphabet);
    t.push_back({x, engine.correct(x).output, x});
  }
  EXPECT_EQ(filter_length_mismatch(t).dropped, 0u);
}

TEST(Io, ReadsTriplesAndRejectsBadLines) {
  std::istringstream in("七器\t机器\t机器\n\n机\t机\t机\n");
  const auto t = read_triples(in, "t");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].prediction, U"机器");
  std::istringstream bad("七器\t机器\n");
  EXPECT_THROW(read_triples(bad, "t"), ParseError);
  std::istringstream pairs("七器\t机器\n");
  EXPECT_EQ(read_pairs(pairs, "p").size(), 1u);
}
