#include "mixalign/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mixalign {

Tensor bce_with_logits(const Tensor& logit, const Tensor& labels) {
  if (logit.shape() != labels.shape()) {
    throw ShapeError("bce_with_logits: logits " + shape_str(logit.shape()) + " vs labels " + shape_str(labels.shape()));
  }
  std::vector<double> sign;
  sign.reserve(labels.numel());
  for (double y : labels.data()) {
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce_with_logits: labels must be 0 or 1");
    sign.push_back(2.0 * y - 1.0);
  }
  const Tensor s(labels.shape(), std::move(sign));
  return mean(softplus(neg(logit * s)));
}

double dann_lambda(double progress, double gamma) {
  const double p = std::clamp(progress, 0.0, 1.0);
  return 2.0 / (1.0 + std::exp(-gamma * p)) - 1.0;
}

double kd_lambda(int epoch, const KdConfig& config) {
  if (epoch < 0) throw std::invalid_argument("kd_lambda: negative epoch");
  if (config.warmup_epochs <= 0) return config.base_weight;
  const double ramp = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(config.warmup_epochs));
  return config.base_weight * ramp;
}

Tensor total_loss(const ObjectiveTerms& terms, double lambda_align, double lambda_kd, LossBreakdown* breakdown) {
  auto finite = [](const Tensor& t, const char* name) {
    if (t.defined() && !std::isfinite(t.item())) throw std::domain_error(std::string("total_loss: non-finite ") + name);
  };
  finite(terms.cls, "classification loss");
  finite(terms.align, "alignment loss");
  finite(terms.kd, "distillation loss");
  if (!(lambda_align >= 0.0) || !(lambda_kd >= 0.0)) throw std::invalid_argument("total_loss: weights must be >= 0");

  Tensor total = terms.cls;
  if (terms.align.defined() && lambda_align != 0.0) total = total + scale(terms.align, lambda_align);
  if (terms.kd.defined() && lambda_kd != 0.0) total = total + scale(terms.kd, lambda_kd);
  if (breakdown != nullptr) {
    breakdown->l_cls = terms.cls.item();
    breakdown->l_align = terms.align.defined() ? terms.align.item() : 0.0;
    breakdown->l_kd = terms.kd.defined() ? terms.kd.item() : 0.0;
    breakdown->lambda_align = lambda_align;
    breakdown->lambda_kd = lambda_kd;
    breakdown->l_total = total.item();
  }
  return total;
}

}  // namespace mixalign
