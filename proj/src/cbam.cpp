#include "mixalign/cbam.hpp"

#include <cmath>
#include <stdexcept>

namespace mixalign {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

void check_features(const Tensor& f, const CbamParams& p) {
  if (f.dim() != 4) throw ShapeError("cbam: expected [B,C,H,W], got " + shape_str(f.shape()));
  if (f.shape()[1] != p.channels()) {
    throw ShapeError("cbam: features " + shape_str(f.shape()) + " do not match " +
                     std::to_string(p.channels()) + " attention channels");
  }
}

Tensor shared_mlp(const Tensor& v, const CbamParams& p) {
  return matmul(relu(matmul(v, p.mlp_w1) + p.mlp_b1), p.mlp_w2) + p.mlp_b2;
}

}  // namespace

CbamParams init_cbam(std::size_t channels, std::size_t reduction_ratio, std::size_t kernel_size, Rng& rng) {
  if (reduction_ratio == 0 || channels % reduction_ratio != 0) {
    throw std::invalid_argument("cbam: reduction ratio must divide the channel count");
  }
  if (kernel_size % 2 == 0) throw std::invalid_argument("cbam: spatial kernel size must be odd");
  const std::size_t hidden = channels / reduction_ratio;
  CbamParams p;
  p.reduction_ratio = reduction_ratio;
  p.kernel_size = kernel_size;
  p.mlp_w1 = uniform_tensor({channels, hidden}, 1.0 / std::sqrt(static_cast<double>(channels)), rng);
  p.mlp_b1 = Tensor::zeros({hidden}, true);
  p.mlp_w2 = uniform_tensor({hidden, channels}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  p.mlp_b2 = Tensor::zeros({channels}, true);
  p.spatial_kernel = uniform_tensor({1, 2, kernel_size, kernel_size},
                                    1.0 / std::sqrt(static_cast<double>(2 * kernel_size * kernel_size)), rng);
  p.spatial_bias = Tensor::zeros({1}, true);
  return p;
}

Tensor channel_attention(const Tensor& features, const CbamParams& params) {
  check_features(features, params);
  const std::size_t b = features.shape()[0], c = features.shape()[1];
  const Tensor avg = mean(features, {2, 3});
  const Tensor peak = max(features, {2, 3});
  const Tensor gate = sigmoid(shared_mlp(avg, params) + shared_mlp(peak, params));
  return reshape(gate, {b, c, 1, 1});
}

Tensor spatial_attention(const Tensor& features, const CbamParams& params) {
  if (features.dim() != 4) throw ShapeError("cbam: expected [B,C,H,W], got " + shape_str(features.shape()));
  const Tensor pooled = concat({mean(features, {1}, true), max(features, {1}, true)}, 1);
  const std::size_t pad = (params.kernel_size - 1) / 2;
  const Tensor logits = conv2d(pooled, params.spatial_kernel, {1, pad}) + params.spatial_bias;
  return sigmoid(logits);
}

Tensor cbam_forward(const Tensor& features, const CbamParams& params) {
  const Tensor refined = features * channel_attention(features, params);
  return refined * spatial_attention(refined, params);
}

}  // namespace mixalign
