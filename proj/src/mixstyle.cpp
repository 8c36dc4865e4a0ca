#include "mixalign/mixstyle.hpp"

#include <stdexcept>

namespace mixalign {

void MixStyleConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("mixstyle: alpha must be > 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("mixstyle: epsilon must be > 0");
  if (!(apply_probability >= 0.0 && apply_probability <= 1.0)) {
    throw std::invalid_argument("mixstyle: apply_probability must lie in [0,1]");
  }
}

ChannelStats channel_stats(const Tensor& x) {
  if (x.dim() != 4) throw ShapeError("channel_stats: expected [B,C,H,W], got " + shape_str(x.shape()));
  if (x.shape()[2] * x.shape()[3] == 0) throw ShapeError("channel_stats: zero spatial extent");
  Tensor mu = mean(x, {2, 3}, true);
  Tensor var = mean(square(x - mu), {2, 3}, true);
  return {mu, sqrt(var)};
}

ChannelStats mix_statistics(const ChannelStats& own, const ChannelStats& partner, const Tensor& lambda) {
  if (own.mu.shape() != partner.mu.shape() || own.sigma.shape() != partner.sigma.shape()) {
    throw ShapeError("mix_statistics: statistics shapes " + shape_str(own.mu.shape()) + " and " +
                     shape_str(partner.mu.shape()) + " differ");
  }
  for (double l : lambda.data()) {
    if (!(l >= 0.0 && l <= 1.0)) throw std::invalid_argument("mix_statistics: lambda outside [0,1]");
  }
  const Tensor rest = add_scalar(neg(lambda), 1.0);
  return {lambda * own.mu + rest * partner.mu, lambda * own.sigma + rest * partner.sigma};
}

MixStyleDraw draw_mixstyle(std::size_t batch, double alpha, Rng& rng) {
  MixStyleDraw draw;
  draw.partner = rng.permutation(batch);
  draw.lambda.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) draw.lambda.push_back(sample_beta(alpha, rng));
  return draw;
}

Tensor mixstyle_apply(const Tensor& x, const MixStyleDraw& draw, double epsilon) {
  const std::size_t batch = x.shape().at(0);
  if (draw.partner.size() != batch || draw.lambda.size() != batch) {
    throw ShapeError("mixstyle_apply: draw does not match batch of " + std::to_string(batch));
  }
  const ChannelStats own = channel_stats(x);
  const ChannelStats partner{index_select(own.mu, draw.partner), index_select(own.sigma, draw.partner)};
  const Tensor lambda(Shape{batch, 1, 1, 1}, draw.lambda);
  const ChannelStats mixed = mix_statistics(own, partner, lambda);
  const Tensor normalized = (x - own.mu) / add_scalar(own.sigma, epsilon);
  return normalized * mixed.sigma + mixed.mu;
}

Tensor mixstyle_forward(const Tensor& x, const MixStyleConfig& config, Rng& rng) {
  if (!config.active) return x;
  config.validate();
  if (x.dim() != 4) throw ShapeError("mixstyle: expected [B,C,H,W], got " + shape_str(x.shape()));
  if (x.shape()[0] < 2) throw std::invalid_argument("mixstyle: active layer needs a batch of at least 2");
  if (!(rng.uniform() < config.apply_probability)) return x;
  return mixstyle_apply(x, draw_mixstyle(x.shape()[0], config.alpha, rng), config.epsilon);
}

}  // namespace mixalign
