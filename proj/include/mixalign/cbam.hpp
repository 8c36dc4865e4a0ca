#pragma once

// Convolutional block attention: a channel gate from pooled descriptors
// followed by a spatial gate from channel-pooled maps.

#include <cstddef>

#include "mixalign/random.hpp"
#include "mixalign/tensor.hpp"

namespace mixalign {

struct CbamParams {
  Tensor mlp_w1;          // [C, C/r]
  Tensor mlp_b1;          // [C/r]
  Tensor mlp_w2;          // [C/r, C]
  Tensor mlp_b2;          // [C]
  Tensor spatial_kernel;  // [1, 2, k, k]
  Tensor spatial_bias;    // [1]
  std::size_t reduction_ratio = 8;
  std::size_t kernel_size = 7;

  std::size_t channels() const { return mlp_w1.shape().at(0); }
};

// Fan-in scaled uniform weights, zero biases.
CbamParams init_cbam(std::size_t channels, std::size_t reduction_ratio, std::size_t kernel_size, Rng& rng);

Tensor channel_attention(const Tensor& features, const CbamParams& params);  // [B,C,1,1]
Tensor spatial_attention(const Tensor& features, const CbamParams& params);  // [B,1,H,W]
Tensor cbam_forward(const Tensor& features, const CbamParams& params);

}  // namespace mixalign
