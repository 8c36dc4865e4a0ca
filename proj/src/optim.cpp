#include "mixalign/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mixalign {

AdamWState AdamWState::for_params(const std::vector<NamedParam>& params) {
  AdamWState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_step(const std::vector<NamedParam>& params, AdamWState& state, const AdamWConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adamw_step: optimizer state does not match parameters");
  }
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw std::runtime_error("adamw_step: no gradient for " + p.name);
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw std::runtime_error("adamw_step: non-finite gradient in " + p.name);
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const double decay = 1.0 - config.lr * config.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor param = params[i].tensor;
    auto theta = param.mutable_data();
    const auto grad = param.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      theta[j] *= decay;
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * grad[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      theta[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

double clip_grad_norm(const std::vector<NamedParam>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      Tensor t = p.tensor;
      if (!t.has_grad()) continue;
      for (double& g : t.mutable_grad()) g *= s;
    }
  }
  return norm;
}

double PlateauScheduler::step(double metric, double lr) {
  if (metric > best + min_delta) {
    best = metric;
    bad_epochs = 0;
    return lr;
  }
  ++bad_epochs;
  if (bad_epochs >= patience) {
    bad_epochs = 0;
    return std::max(lr * factor, lr_min);
  }
  return lr;
}

bool EarlyStopping::update(double metric) {
  if (metric > best + min_delta) {
    best = metric;
    bad_epochs = 0;
    return true;
  }
  ++bad_epochs;
  return false;
}

}  // namespace mixalign
