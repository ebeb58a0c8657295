#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ontoforge/textmetrics.hpp"
#include "oracles.hpp"

namespace ontoforge {
namespace {

using ::testing::ElementsAre;
using ::testing::IsEmpty;

TokenSeq random_tokens(std::mt19937_64& rng, std::size_t max_len, int vocab) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> word(0, vocab - 1);
  TokenSeq s(len(rng));
  for (auto& t : s) t = "w" + std::to_string(word(rng));
  return s;
}

TEST(Tokenize, Examples) {
  EXPECT_THAT(tokenize("The cat, sat."), ElementsAre("the", "cat", "sat"));
  EXPECT_THAT(tokenize(""), IsEmpty());
  EXPECT_THAT(tokenize("  \t\n "), IsEmpty());
  EXPECT_THAT(tokenize("state-of-the-art"), ElementsAre("state-of-the-art"));
  EXPECT_THAT(tokenize("(Hello) -- world!"), ElementsAre("hello", "world"));
}

TEST(Tokenize, FoldsNonAsciiLetters) {
  EXPECT_THAT(tokenize("ÉCOLE Straße ΔΕΛΤΑ Жизнь"),
              ElementsAre("école", "straße", "δελτα", "жизнь"));
  EXPECT_EQ(fold_case("ÀÖ Ÿ"), "àö ÿ");
}

TEST(RougeL, Examples) {
  TokenSeq a = {"the", "cat", "sat", "on", "mat"};
  EXPECT_DOUBLE_EQ(rouge_l(a, a), 1.0);
  EXPECT_NEAR(rouge_l(a, {"the", "cat", "lay", "on", "mat"}), 0.8, 1e-15);
  EXPECT_EQ(rouge_l({"a", "b"}, {"c", "d"}), 0.0);
  EXPECT_EQ(rouge_l({}, a), 0.0);
  EXPECT_EQ(rouge_l(a, {}), 0.0);
}

TEST(RougeL, MatchesFullTableOracle) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    auto c = random_tokens(rng, 30, 6);
    auto r = random_tokens(rng, 30, 6);
    ASSERT_NEAR(rouge_l(c, r), oracle::rouge_l(c, r), 1e-12);
    ASSERT_DOUBLE_EQ(rouge_l(c, r), rouge_l(r, c));
  }
}

TEST(Bleu4, Examples) {
  TokenSeq five = {"a", "b", "c", "d", "e"};
  EXPECT_DOUBLE_EQ(bleu_4(five, five), 1.0);
  EXPECT_NEAR(bleu_4({"a", "b", "c", "d"}, five), std::exp(1.0 - 5.0 / 4.0), 1e-15);
  EXPECT_NEAR(bleu_4({"a", "b", "c", "d"}, five), 0.7788007830714049, 1e-15);
  EXPECT_EQ(bleu_4({}, five), 0.0);
}

TEST(Bleu4, ShortCandidateUsesSmoothing) {
  // Only unigram precision is defined for a single token; the higher orders
  // are replaced by the smoothing constant.
  double expected = std::pow(1.0 * kBleuEpsilon * kBleuEpsilon * kBleuEpsilon, 0.25);
  EXPECT_NEAR(bleu_4({"a"}, {"a"}), expected, 1e-20);
}

TEST(Bleu4, MatchesCountingOracle) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    auto c = random_tokens(rng, 30, 4);
    auto r = random_tokens(rng, 30, 4);
    ASSERT_NEAR(bleu_4(c, r), oracle::bleu_4(c, r), 1e-12);
  }
}

TEST(Cosine, Examples) {
  std::vector<double> u = {0.3, -1.2, 4.0};
  std::vector<double> neg = {-0.3, 1.2, -4.0};
  EXPECT_EQ(cosine(u, u), 1.0);
  EXPECT_EQ(cosine(u, neg), -1.0);
  EXPECT_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_THROW(cosine(u, std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_THROW(cosine(u, std::vector<double>{0, 0, 0}), std::invalid_argument);
}

TEST(Hybrid, IdenticalInputsScoreThree) {
  std::vector<double> e = {0.1, 0.2, -0.7, 0.05};
  auto s = hybrid_score("Asthma is a chronic airway disease.",
                        "Asthma is a chronic airway disease.", e, e);
  EXPECT_EQ(s.hybrid, 3.0);
}

TEST(Hybrid, DisjointOrthogonalNearZero) {
  std::vector<double> a = {1, 0}, b = {0, 1};
  auto s = hybrid_score("alpha beta gamma delta", "one two three four", a, b);
  EXPECT_EQ(s.cosine, 0.0);
  EXPECT_EQ(s.rouge_l, 0.0);
  EXPECT_GE(s.hybrid, 0.0);
  EXPECT_LT(s.hybrid, 1e-6);
}

TEST(Hybrid, SumOfComponentsWithinRange) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  auto join = [](const TokenSeq& t) {
    std::string s;
    for (const auto& w : t) s += w + " ";
    return s;
  };
  for (int i = 0; i < 300; ++i) {
    auto y = join(random_tokens(rng, 20, 5));
    auto yo = join(random_tokens(rng, 20, 5));
    std::vector<double> u(8), v(8);
    for (auto& x : u) x = g(rng);
    for (auto& x : v) x = g(rng);
    auto s = hybrid_score(y, yo, u, v);
    ASSERT_EQ(s.hybrid, (s.cosine + s.rouge_l) + s.bleu_4);
    ASSERT_GE(s.hybrid, -1.0 - 1e-9);
    ASSERT_LE(s.hybrid, 3.0 + 1e-9);
    ASSERT_NEAR(s.rouge_l, oracle::rouge_l(tokenize(y), tokenize(yo)), 1e-12);
    ASSERT_NEAR(s.bleu_4, oracle::bleu_4(tokenize(y), tokenize(yo)), 1e-12);
  }
}

}  // namespace
}  // namespace ontoforge
