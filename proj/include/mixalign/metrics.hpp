#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>

namespace mixalign {

struct Rates {
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct MetricsReport {
  double balanced_accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double roc_auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double threshold = 0.5;
};

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A score at or above threshold is a positive prediction.
Rates confusion_rates(std::span<const double> scores, std::span<const int> labels, double threshold);

double balanced_accuracy(double sensitivity, double specificity);

// Mann-Whitney form: P(score_pos > score_neg) + 0.5 * P(tie), via midranks.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

}  // namespace mixalign
