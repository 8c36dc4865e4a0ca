#pragma once

#include "mixalign/ema_distill.hpp"
#include "mixalign/tensor.hpp"

namespace mixalign {

struct LossBreakdown {
  double l_cls = 0.0;
  double l_align = 0.0;
  double l_kd = 0.0;
  double lambda_align = 0.0;
  double lambda_kd = 0.0;
  double l_total = 0.0;
};

// mean_b log(1 + exp(-s_b * logit_b)) with s = 2 * label - 1.
Tensor bce_with_logits(const Tensor& logit, const Tensor& labels);

// 2 / (1 + exp(-gamma * p)) - 1 with p clamped to [0,1].
double dann_lambda(double progress, double gamma = 10.0);

// base_weight * min(1, epoch / warmup_epochs).
double kd_lambda(int epoch, const KdConfig& config);

struct ObjectiveTerms {
  Tensor cls;
  Tensor align;  // undefined when the term was skipped
  Tensor kd;     // undefined when the term was skipped
};

// L_cls + lambda_align * L_align + lambda_kd * L_kd. Terms whose weight is
// exactly zero (or that are undefined) stay out of the graph and are logged
// by value only.
Tensor total_loss(const ObjectiveTerms& terms, double lambda_align, double lambda_kd, LossBreakdown* breakdown = nullptr);

}  // namespace mixalign
