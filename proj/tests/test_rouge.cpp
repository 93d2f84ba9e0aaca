#include "page/rouge.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"

using namespace page;
using Tokens = std::vector<std::string>;

namespace {

void expect_score(const RougeScore& s, double p, double r, double f) {
  EXPECT_DOUBLE_EQ(s.precision, p);
  EXPECT_DOUBLE_EQ(s.recall, r);
  EXPECT_DOUBLE_EQ(s.f1, f);
}

}  // namespace

TEST(RougeN, CatSatExample) {
  const Tokens cand = {"the", "cat", "sat"}, ref = {"the", "cat", "slept"};
  expect_score(rouge_n(cand, ref, 1), 2.0 / 3, 2.0 / 3, 2.0 / 3);
  expect_score(rouge_n(cand, ref, 2), 0.5, 0.5, 0.5);
}

TEST(RougeN, IdentityAndDisjoint) {
  const Tokens a = {"when", "x", "the", "system", "shall", "y"};
  for (std::size_t n = 1; n <= a.size(); ++n) expect_score(rouge_n(a, a, n), 1, 1, 1);
  expect_score(rouge_n(a, Tokens{"p", "q"}, 1), 0, 0, 0);
}

TEST(RougeN, CountsAreClipped) {
  const Tokens cand = {"the", "the", "the", "the"}, ref = {"the", "cat", "the"};
  expect_score(rouge_n(cand, ref, 1), 0.5, 2.0 / 3, 2 * 0.5 * (2.0 / 3) / (0.5 + 2.0 / 3));
}

TEST(RougeN, ShortAndEmptySequences) {
  expect_score(rouge_n(Tokens{"a"}, Tokens{"a"}, 2), 0, 0, 0);
  expect_score(rouge_n(Tokens{}, Tokens{"a"}, 1), 0, 0, 0);
  expect_score(rouge_n(Tokens{}, Tokens{}, 1), 0, 0, 0);
  EXPECT_THROW(rouge_n(Tokens{"a"}, Tokens{"a"}, 0), std::invalid_argument);
}

TEST(RougeL, Examples) {
  expect_score(rouge_l(Tokens{"the", "cat", "sat"}, Tokens{"the", "cat", "slept"}), 2.0 / 3, 2.0 / 3, 2.0 / 3);
  expect_score(rouge_l(Tokens{"a", "b", "c", "d"}, Tokens{"b", "a", "c", "d"}), 0.75, 0.75, 0.75);
  expect_score(rouge_l(Tokens{}, Tokens{"a", "b"}), 0, 0, 0);
  EXPECT_EQ(lcs_length(Tokens{"a", "x", "b", "y", "c"}, Tokens{"a", "b", "c"}), 3u);
}

TEST(RougeL, UnequalLengths) {
  // LCS 2 over candidate 4 and reference 2
  expect_score(rouge_l(Tokens{"a", "z", "b", "z"}, Tokens{"a", "b"}), 0.5, 1.0, 2 * 0.5 / 1.5);
}

TEST(ScorePair, UsesTheSharedTokenizer) {
  const auto r = score_pair("When the server restarts, the system shall notify the admin.",
                            "when THE server restarts the system shall notify the admin");
  expect_score(r.rouge1, 1, 1, 1);
  expect_score(r.rouge2, 1, 1, 1);
  expect_score(r.rougeL, 1, 1, 1);
  // multi-line output scores like a single line
  EXPECT_EQ(score_pair("a b\nc", "a b c"), score_pair("a b c", "a b c"));
}

TEST(Rouge, OracleEquivalenceOnRandomPairs) {
  std::mt19937 gen(2024);
  for (int i = 0; i < 600; ++i) {
    const auto a = oracle::random_tokens(gen, 8, 10);
    const auto b = oracle::random_tokens(gen, 8, 10);
    for (std::size_t n : {1, 2}) {
      const auto want = oracle::rouge_n(a, b, n);
      const auto got = rouge_n(a, b, n);
      EXPECT_EQ(got.precision, want.p);
      EXPECT_EQ(got.recall, want.r);
      EXPECT_EQ(got.f1, want.f);
    }
    EXPECT_EQ(lcs_length(a, b), oracle::brute_lcs(a, b));
    const auto want_l = oracle::rouge_l(a, b);
    const auto got_l = rouge_l(a, b);
    EXPECT_EQ(got_l.precision, want_l.p);
    EXPECT_EQ(got_l.recall, want_l.r);
    EXPECT_EQ(got_l.f1, want_l.f);
  }
}

TEST(Rouge, SymmetryBoundsAndOrdering) {
  std::mt19937 gen(99);
  for (int i = 0; i < 600; ++i) {
    const auto a = oracle::random_tokens(gen, 8, 10);
    const auto b = oracle::random_tokens(gen, 8, 10);
    const auto ab = score_tokens(a, b), ba = score_tokens(b, a);
    for (auto [x, y] : {std::pair{ab.rouge1, ba.rouge1}, std::pair{ab.rouge2, ba.rouge2}, std::pair{ab.rougeL, ba.rougeL}}) {
      EXPECT_EQ(x.precision, y.recall);
      EXPECT_EQ(x.recall, y.precision);
      EXPECT_DOUBLE_EQ(x.f1, y.f1);
      for (double v : {x.precision, x.recall, x.f1}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      if (x.precision + x.recall > 0) {
        EXPECT_DOUBLE_EQ(x.f1, 2 * x.precision * x.recall / (x.precision + x.recall));
      }
    }
    EXPECT_LE(ab.rougeL.recall, ab.rouge1.recall);
    if (!a.empty()) {
      const auto self = score_tokens(a, a);
      expect_score(self.rouge1, 1, 1, 1);
      expect_score(self.rougeL, 1, 1, 1);
    }
  }
}

TEST(CorpusAverage, Basics) {
  RougeReport a, b;
  a.rouge1.recall = 0.4;
  b.rouge1.recall = 0.6;
  const std::vector<RougeReport> two = {a, b};
  const auto avg = corpus_average(two);
  EXPECT_DOUBLE_EQ(avg.mean.rouge1.recall, 0.5);
  EXPECT_EQ(avg.count, 2u);

  const auto one = score_pair("a b c", "a c d");
  const std::vector<RougeReport> single = {one};
  EXPECT_EQ(corpus_average(single).mean, one);
  EXPECT_THROW(corpus_average({}), std::invalid_argument);
}

TEST(CorpusAverage, OrderDoesNotMatter) {
  std::mt19937 gen(1);
  std::vector<RougeReport> reports;
  for (int i = 0; i < 200; ++i) {
    reports.push_back(score_tokens(oracle::random_tokens(gen, 8, 6), oracle::random_tokens(gen, 8, 6)));
  }
  const auto base = corpus_average(reports).mean;
  for (int k = 0; k < 10; ++k) {
    std::shuffle(reports.begin(), reports.end(), gen);
    EXPECT_EQ(corpus_average(reports).mean, base);
  }
}

TEST(RougeJson, Layout) {
  const auto j = to_json(score_pair("a b", "a b"));
  EXPECT_DOUBLE_EQ(j["rougeL"]["f1"].get<double>(), 1.0);
  EXPECT_TRUE(j["rouge2"].contains("precision"));
}
