#pragma once

// Feature-statistic style mixing: each instance's channel-wise mean and
// standard deviation are replaced by a convex mix with a partner instance's,
// leaving the normalized content (and the label) untouched.

#include <vector>

#include "mixalign/random.hpp"
#include "mixalign/tensor.hpp"

namespace mixalign {

struct MixStyleConfig {
  double alpha = 0.1;               // Beta(alpha, alpha) concentration
  double epsilon = 1e-6;            // added to sigma in the re-standardization
  double apply_probability = 0.5;   // chance a training batch is mixed
  bool active = true;               // false in eval mode or when the layer is disabled

  void validate() const;
};

// Per-(instance, channel) spatial statistics, both [B,C,1,1].
struct ChannelStats {
  Tensor mu;
  Tensor sigma;  // sqrt of the population variance over H*W
};

ChannelStats channel_stats(const Tensor& x);

// lambda has one entry per instance, shaped [B,1,1,1], values in [0,1].
ChannelStats mix_statistics(const ChannelStats& own, const ChannelStats& partner, const Tensor& lambda);

// One realization of the layer's randomness.
struct MixStyleDraw {
  std::vector<std::size_t> partner;  // partner[i] is the instance mixed into i
  std::vector<double> lambda;
};

MixStyleDraw draw_mixstyle(std::size_t batch, double alpha, Rng& rng);

// Deterministic core: sigma_mix * (x - mu) / (sigma + eps) + mu_mix.
Tensor mixstyle_apply(const Tensor& x, const MixStyleDraw& draw, double epsilon);

// Full layer. Returns x itself when inactive or when the apply draw fails.
Tensor mixstyle_forward(const Tensor& x, const MixStyleConfig& config, Rng& rng);

}  // namespace mixalign
