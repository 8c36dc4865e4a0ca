#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mixalign/metrics.hpp"
#include "mixalign/random.hpp"

using namespace mixalign;

namespace {

// Pair counting over every positive/negative pair, ties worth one half.
double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

double round_half_up_4(double x) { return std::floor(x * 1e4 + 0.5 + 1e-9) / 1e4; }

}  // namespace

TEST(ConfusionRates, Examples) {
  const std::vector<double> s{0.9, 0.2, 0.6, 0.4};
  const std::vector<int> y{1, 0, 1, 0};
  const Rates r = confusion_rates(s, y, 0.5);
  EXPECT_EQ(r.sensitivity, 1.0);
  EXPECT_EQ(r.specificity, 1.0);
  const Rates all_pos = confusion_rates(std::vector<double>{0.7, 0.8, 0.9}, std::vector<int>{1, 0, 0}, 0.5);
  EXPECT_EQ(all_pos.sensitivity, 1.0);
  EXPECT_EQ(all_pos.specificity, 0.0);
  // Scores equal to the threshold count as positive.
  EXPECT_EQ(confusion_rates(std::vector<double>{0.5, 0.1}, std::vector<int>{1, 0}, 0.5).sensitivity, 1.0);
}

TEST(ConfusionRates, SingleClassAndBadLabelsAreRejected) {
  EXPECT_THROW(confusion_rates(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}, 0.5), MetricsError);
  EXPECT_THROW(confusion_rates(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 2}, 0.5), MetricsError);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1}, std::vector<int>{0, 1}), MetricsError);
}

TEST(BalancedAccuracy, ReportedRatesRoundToReportedValues) {
  EXPECT_EQ(round_half_up_4(balanced_accuracy(0.8873, 0.8651)), 0.8762);
  EXPECT_NEAR(balanced_accuracy(0.9014, 0.6851), 0.79325, 1e-12);
  EXPECT_EQ(round_half_up_4(balanced_accuracy(0.9014, 0.6851)), 0.7933);
  EXPECT_EQ(balanced_accuracy(1.0, 0.0), 0.5);
}

TEST(BalancedAccuracy, ReportIsConsistent) {
  const std::vector<double> s{0.9, 0.3, 0.6, 0.55, 0.1};
  const std::vector<int> y{1, 0, 0, 1, 0};
  const MetricsReport r = evaluate_scores(s, y);
  EXPECT_NEAR(r.balanced_accuracy, 0.5 * (r.sensitivity + r.specificity), 1e-12);
  EXPECT_EQ(r.n_pos, 2u);
  EXPECT_EQ(r.n_neg, 3u);
  EXPECT_EQ(r.threshold, 0.5);
}

TEST(RocAuc, Examples) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_EQ(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{0, 1, 1, 0}), 0.5);
}

TEST(RocAuc, MatchesPairCountingOnRandomInstances) {
  Rng rng(2024);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.index(49);
    std::vector<double> s(n);
    std::vector<int> y(n);
    // Coarse grid so ties are common.
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.index(8)) / 8.0;
      y[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_EQ(roc_auc(s, y), brute_auc(s, y)) << "instance " << t;
  }
}

TEST(RocAuc, ComplementSymmetryAndMonotoneInvariance) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 10 + rng.index(30);
    std::vector<double> s(n), g(n);
    std::vector<int> y(n), flipped(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform(-2, 2);
      g[i] = std::exp(3.0 * s[i]) + 1.0;
      y[i] = i % 3 == 0;
      flipped[i] = 1 - y[i];
    }
    EXPECT_NEAR(roc_auc(s, y) + roc_auc(s, flipped), 1.0, 1e-12);
    EXPECT_EQ(roc_auc(s, y), roc_auc(g, y));
  }
}
