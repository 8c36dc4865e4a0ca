#include "mixalign/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace mixalign {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels, std::size_t& pos, std::size_t& neg) {
  if (scores.size() != labels.size()) throw MetricsError("metrics: scores and labels differ in length");
  pos = neg = 0;
  for (int y : labels) {
    if (y == 1) {
      ++pos;
    } else if (y == 0) {
      ++neg;
    } else {
      throw MetricsError("metrics: labels must be 0 or 1");
    }
  }
  if (pos == 0 || neg == 0) throw MetricsError("metrics: both classes must be present");
}

}  // namespace

Rates confusion_rates(std::span<const double> scores, std::span<const int> labels, double threshold) {
  std::size_t pos = 0, neg = 0;
  check_inputs(scores, labels, pos, neg);
  std::size_t tp = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1 && predicted) ++tp;
    if (labels[i] == 0 && !predicted) ++tn;
  }
  return {static_cast<double>(tp) / static_cast<double>(pos), static_cast<double>(tn) / static_cast<double>(neg)};
}

double balanced_accuracy(double sensitivity, double specificity) { return 0.5 * (sensitivity + specificity); }

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  check_inputs(scores, labels, pos, neg);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of positive midranks, kept doubled so ties stay in integers.
  std::size_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::size_t doubled_midrank = i + 1 + j;  // 2 * (i+1 + j) / 2
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) doubled_rank_sum += doubled_midrank;
    }
    i = j;
  }
  // U = R_pos - pos(pos+1)/2, doubled throughout.
  const std::size_t doubled_u = doubled_rank_sum - pos * (pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold) {
  MetricsReport r;
  const Rates rates = confusion_rates(scores, labels, threshold);
  r.sensitivity = rates.sensitivity;
  r.specificity = rates.specificity;
  r.balanced_accuracy = balanced_accuracy(rates.sensitivity, rates.specificity);
  r.roc_auc = roc_auc(scores, labels);
  for (int y : labels) (y == 1 ? r.n_pos : r.n_neg) += 1;
  r.threshold = threshold;
  return r;
}

}  // namespace mixalign
