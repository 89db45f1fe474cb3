#include <gtest/gtest.h>

#include <vector>

#include "handdi/errors.hpp"
#include "handdi/metrics.hpp"
#include "handdi/random.hpp"

using namespace handdi;

namespace {

// Wins plus half-ties over every positive/negative pair.
double pair_count_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      if (s[i] > s[j]) wins += 1;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

double auc(const std::vector<double>& s, const std::vector<int>& y) {
  return auroc(std::span<const double>(s), std::span<const int>(y));
}

Metrics eval(const std::vector<double>& s, const std::vector<int>& y) {
  return evaluate(std::span<const double>(s), std::span<const int>(y));
}

}  // namespace

TEST(Auroc, SeparatedAndAllTied) {
  EXPECT_EQ(auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
  EXPECT_EQ(auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}), 0.0);
  EXPECT_EQ(auc({0.4, 0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0, 0}), 0.5);
}

TEST(Auroc, SingleClassUndefined) {
  EXPECT_THROW(auc({0.1, 0.2}, {1, 1}), ContractError);
  EXPECT_THROW(auc({0.1}, {0, 1}), DimensionError);
}

TEST(Auroc, MatchesPairCountingOracle) {
  Rng rng = make_rng(12, Stream::Synthetic);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 60);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(uniform01(rng) * 6) / 5;  // heavy ties
      y[i] = uniform01(rng) < 0.4;
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_DOUBLE_EQ(auc(s, y), pair_count_auroc(s, y));
  }
}

TEST(Evaluate, TwoThirdsExample) {
  // TP=2, FP=1, FN=1, TN=1
  const auto m = eval({0.9, 0.8, 0.7, 0.3, 0.2}, {1, 1, 0, 1, 0});
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.tn, 1u);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3);
}

TEST(Evaluate, PerfectSeparation) {
  const auto m = eval({0.1, 0.9, 0.95, 0.2}, {0, 1, 1, 0});
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.auroc, 1.0);
}

TEST(Evaluate, ThresholdIsStrictAndEmptyDenominatorsAreZero) {
  const auto m = eval({0.5, 0.5}, {1, 0});
  EXPECT_EQ(m.tp + m.fp, 0u);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  const auto single = eval({0.7, 0.1}, {1, 1});
  EXPECT_FALSE(single.auroc.has_value());
  EXPECT_NE(single.to_text().find("auroc\tNA"), std::string::npos);
}

TEST(Evaluate, RejectsBadInputs) {
  EXPECT_THROW(eval({1.2}, {1}), ContractError);
  EXPECT_THROW(eval({0.2}, {2}), ContractError);
}

TEST(Evaluate, MatchesNaiveRecount) {
  Rng rng = make_rng(33, Stream::Synthetic);
  std::vector<double> s(200);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = uniform01(rng) < 0.5;
    s[i] = std::clamp(0.3 * y[i] + 0.7 * uniform01(rng), 0.0, 1.0);
  }
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    const bool p = s[i] > 0.5;
    tp += p && y[i];
    fp += p && !y[i];
    fn += !p && y[i];
    tn += !p && !y[i];
  }
  const auto m = eval(s, y);
  EXPECT_EQ(m.tp, tp);
  EXPECT_EQ(m.fp, fp);
  EXPECT_EQ(m.tn, tn);
  EXPECT_EQ(m.fn, fn);
  const double prec = double(tp) / double(tp + fp), rec = double(tp) / double(tp + fn);
  EXPECT_DOUBLE_EQ(m.f1, 2 * prec * rec / (prec + rec));
  EXPECT_DOUBLE_EQ(*m.auroc, pair_count_auroc(s, y));
  for (double v : {m.precision, m.recall, m.f1, *m.auroc}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
