#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "mixalign/model.hpp"

namespace mixalign {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moments per parameter, in ModelState::parameters() order.
struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamWState for_params(const std::vector<NamedParam>& params);
};

// Decoupled weight decay, then the bias-corrected Adam update. Throws if a
// parameter has no gradient or a non-finite one.
void adamw_step(const std::vector<NamedParam>& params, AdamWState& state, const AdamWConfig& config);

// Scales all gradients so their global L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(const std::vector<NamedParam>& params, double max_norm = 1.0);

// Lowers the learning rate after `patience` consecutive epochs in which a
// higher-is-better metric failed to improve by more than min_delta.
struct PlateauScheduler {
  int patience = 5;
  double factor = 0.5;
  double min_delta = 1e-4;
  double lr_min = 1e-5;
  double best = -std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  double step(double metric, double lr);
};

// Stops after `patience` consecutive epochs without improvement.
struct EarlyStopping {
  int patience = 10;
  double min_delta = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  // Returns true when the metric improved on the best so far.
  bool update(double metric);
  bool should_stop() const { return bad_epochs >= patience; }
};

}  // namespace mixalign
