#include <gtest/gtest.h>

#include <cmath>

#include "mixalign/cbam.hpp"
#include "test_util.hpp"

using namespace mixalign;
using testutil::random_tensor;

namespace {

CbamParams zero_params(std::size_t c, std::size_t r, std::size_t k) {
  Rng rng(0);
  CbamParams p = init_cbam(c, r, k, rng);
  for (Tensor* t : {&p.mlp_w1, &p.mlp_b1, &p.mlp_w2, &p.mlp_b2, &p.spatial_kernel, &p.spatial_bias}) {
    for (double& v : t->mutable_data()) v = 0.0;
  }
  return p;
}

}  // namespace

TEST(ChannelAttention, ZeroWeightsGiveOneHalf) {
  Rng rng(1);
  const Tensor a = channel_attention(random_tensor({2, 8, 5, 5}, rng), zero_params(8, 4, 3));
  EXPECT_EQ(a.shape(), (Shape{2, 8, 1, 1}));
  for (double v : a.data()) EXPECT_EQ(v, 0.5);
}

TEST(ChannelAttention, OpenUnitInterval) {
  Rng rng(2);
  const CbamParams p = init_cbam(8, 4, 3, rng);
  for (double v : channel_attention(random_tensor({3, 8, 4, 4}, rng, -3, 3), p).data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(SpatialAttention, ZeroKernelAndShape) {
  Rng rng(3);
  const Tensor a = spatial_attention(random_tensor({2, 8, 5, 6}, rng), zero_params(8, 4, 3));
  EXPECT_EQ(a.shape(), (Shape{2, 1, 5, 6}));
  for (double v : a.data()) EXPECT_EQ(v, 0.5);
}

TEST(SpatialAttention, ConstantInputGivesConstantMapAwayFromBorder) {
  Rng rng(4);
  const CbamParams p = init_cbam(8, 4, 3, rng);
  const Tensor a = spatial_attention(Tensor::full({1, 8, 7, 7}, 0.8), p);
  // Zero padding changes the border response; the interior must be flat.
  const double centre = a.at({0, 0, 3, 3});
  for (std::size_t y = 1; y < 6; ++y) {
    for (std::size_t x = 1; x < 6; ++x) EXPECT_NEAR(a.at({0, 0, y, x}), centre, 1e-15);
  }
}

TEST(Cbam, SaturatedGatesPassFeaturesThrough) {
  CbamParams p = zero_params(8, 4, 3);
  for (double& v : p.mlp_b2.mutable_data()) v = 100.0;
  p.spatial_bias.mutable_data()[0] = 100.0;
  Rng rng(5);
  const Tensor f = random_tensor({2, 8, 4, 4}, rng);
  const Tensor out = cbam_forward(f, p);
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(out.data()[i], f.data()[i]);
}

TEST(Cbam, ContractionShapeAndSignPreservation) {
  Rng rng(6);
  const CbamParams p = init_cbam(8, 4, 7, rng);
  const Tensor f = random_tensor({2, 8, 5, 5}, rng, -2, 2);
  const Tensor out = cbam_forward(f, p);
  EXPECT_EQ(out.shape(), f.shape());
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_LE(std::abs(out.data()[i]), std::abs(f.data()[i]));
  for (double t : {0.1, 3.0, 50.0}) {
    const Tensor scaled = cbam_forward(f * t, p);
    for (std::size_t i = 0; i < f.numel(); ++i) {
      if (f.data()[i] != 0.0) {
        EXPECT_EQ(std::signbit(scaled.data()[i]), std::signbit(f.data()[i]));
      }
    }
  }
}

TEST(Cbam, RejectsChannelMismatch) {
  Rng rng(7);
  const CbamParams p = init_cbam(8, 4, 3, rng);
  EXPECT_THROW(cbam_forward(Tensor::zeros({1, 4, 3, 3}), p), ShapeError);
  EXPECT_THROW(init_cbam(8, 3, 3, rng), std::invalid_argument);
  EXPECT_THROW(init_cbam(8, 4, 4, rng), std::invalid_argument);
}

TEST(Cbam, EveryParameterReceivesGradient) {
  Rng rng(8);
  CbamParams p = init_cbam(8, 4, 3, rng);
  for (Tensor* t : {&p.mlp_b1, &p.mlp_b2, &p.spatial_bias}) {
    for (double& v : t->mutable_data()) v = rng.uniform(-0.3, 0.3);
  }
  const Tensor f = random_tensor({2, 8, 5, 5}, rng, -1, 1, true);
  const Tensor w = random_tensor({2, 8, 5, 5}, rng);
  sum(cbam_forward(f, p) * w).backward();
  for (const Tensor* t : {&p.mlp_w1, &p.mlp_b1, &p.mlp_w2, &p.mlp_b2, &p.spatial_kernel, &p.spatial_bias}) {
    ASSERT_TRUE(t->has_grad());
    double norm = 0.0;
    for (double g : t->grad()) norm += g * g;
    EXPECT_GT(norm, 0.0);
  }
}
