#include <gtest/gtest.h>

#include <cmath>

#include "mixalign/ema_distill.hpp"
#include "mixalign/objective.hpp"
#include "test_util.hpp"

using namespace mixalign;
using testutil::random_tensor;

namespace {

ModelState small_model(std::uint64_t seed) {
  ModelArch arch;
  arch.widths = {4, 8, 8};
  arch.image_size = 16;
  arch.cbam_reduction = 4;
  arch.cbam_kernel = 3;
  Rng rng(seed);
  return init_model(arch, MixStyleConfig{}, rng);
}

std::vector<double> flatten(const ModelState& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST(EmaUpdate, ZeroMomentumCopiesStudent) {
  const ModelState s0 = small_model(1), s1 = small_model(2);
  EmaTeacher t = make_teacher(s0, 0.5);
  ema_update(t, s1, 0.0);
  EXPECT_EQ(flatten(t.model), flatten(s1));
}

TEST(EmaUpdate, MomentumNearOneFreezesTeacher) {
  const ModelState s0 = small_model(1), s1 = small_model(2);
  EmaTeacher t = make_teacher(s0, 0.5);
  ema_update(t, s1, 1.0 - 1e-12);
  const auto a = flatten(t.model), b = flatten(s0);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-11);
}

TEST(EmaUpdate, HandSubstitutionAndContraction) {
  ModelState s = small_model(3);
  EmaTeacher t = make_teacher(s, 0.999);
  for (const auto& p : t.model.parameters()) {
    Tensor w = p.tensor;
    for (double& v : w.mutable_data()) v = 1.0;
  }
  for (const auto& p : s.parameters()) {
    Tensor w = p.tensor;
    for (double& v : w.mutable_data()) v = 0.0;
  }
  ema_update(t, s);
  for (double v : flatten(t.model)) EXPECT_DOUBLE_EQ(v, 0.999);

  // |T' - S| = m |T - S| for a fixed student.
  const ModelState s2 = small_model(4);
  EmaTeacher t2 = make_teacher(small_model(5), 0.9);
  const auto before = flatten(t2.model), target = flatten(s2);
  ema_update(t2, s2);
  const auto after = flatten(t2.model);
  for (std::size_t i = 0; i < after.size(); ++i) {
    EXPECT_NEAR(std::abs(after[i] - target[i]), 0.9 * std::abs(before[i] - target[i]), 1e-12);
  }
}

TEST(EmaUpdate, RejectsBadMomentumAndMismatchedModels) {
  const ModelState s = small_model(1);
  EXPECT_THROW(make_teacher(s, 1.0), std::invalid_argument);
  EXPECT_THROW(make_teacher(s, -0.1), std::invalid_argument);
  EmaTeacher t = make_teacher(s, 0.9);
  ModelState other = s.clone();
  other.head_bias = Tensor::zeros({3});
  EXPECT_THROW(ema_update(t, other), ShapeError);
}

TEST(KdLoss, HandExample) {
  const Tensor zs({1, 2}, {0.0, 0.0});
  const Tensor zt({1, 2}, {2.0, 0.0});
  EXPECT_NEAR(kd_loss(zs, zt, 2.0).item(), 0.4437, 1e-3);
  // Brute-force sum with the exact softened distributions.
  const double pt0 = 1.0 / (1.0 + std::exp(-1.0)), pt1 = 1.0 - pt0;
  const double kl = pt0 * std::log(pt0 / 0.5) + pt1 * std::log(pt1 / 0.5);
  EXPECT_NEAR(kd_loss(zs, zt, 2.0).item(), 4.0 * kl, 1e-14);
}

TEST(KdLoss, IdenticalLogitsGiveZero) {
  Rng rng(2);
  const Tensor z = random_tensor({5, 2}, rng, -4, 4);
  EXPECT_NEAR(kd_loss(z, z, 2.0).item(), 0.0, 1e-15);
}

TEST(KdLoss, OnlyStudentReceivesGradient) {
  Rng rng(3);
  Tensor zs = random_tensor({4, 2}, rng, -1, 1, true);
  Tensor zt = random_tensor({4, 2}, rng, -1, 1, true);
  kd_loss(zs, zt, 2.0).backward();
  EXPECT_TRUE(zs.has_grad());
  EXPECT_FALSE(zt.has_grad());
}

TEST(KdLoss, RejectsBadInputs) {
  EXPECT_THROW(kd_loss(Tensor::zeros({2, 2}), Tensor::zeros({2, 3}), 2.0), ShapeError);
  EXPECT_THROW(kd_loss(Tensor::zeros({2, 2}), Tensor::zeros({2, 2}), 0.0), std::invalid_argument);
  EXPECT_THROW(kd_loss(Tensor({1, 2}, {NAN, 0.0}), Tensor::zeros({1, 2}), 2.0), std::domain_error);
}

TEST(Teacher, BackwardLeavesTeacherBitwiseUnchanged) {
  ModelState s = small_model(7);
  EmaTeacher t = make_teacher(s, 0.999);
  for (const auto& p : t.model.parameters()) EXPECT_FALSE(p.tensor.requires_grad());
  const auto before = flatten(t.model);

  Rng rng(1);
  const Tensor images = random_tensor({4, 3, 16, 16}, rng, 0, 1);
  Rng fwd(2);
  const Tensor zs = forward(s, images, fwd).logits;
  const Tensor zt = teacher_forward(t, images);
  EXPECT_FALSE(zt.requires_grad());
  (kd_loss(zs, zt, 2.0) + bce_with_logits(binary_logit(zs), Tensor::vector({0, 1, 1, 0}))).backward();

  EXPECT_EQ(flatten(t.model), before);
  for (const auto& p : t.model.parameters()) EXPECT_FALSE(p.tensor.has_grad());
  for (const auto& p : s.parameters()) EXPECT_TRUE(p.tensor.has_grad()) << p.name;
}

TEST(Teacher, StartsAsStudentEvalThenMoves) {
  ModelState s = small_model(8);
  EmaTeacher t = make_teacher(s, 0.5);
  Rng rng(1);
  const Tensor images = random_tensor({3, 3, 16, 16}, rng, 0, 1);
  ModelState eval = s.clone();
  eval.training = false;
  Rng unused(0);
  const Tensor want = forward(eval, images, unused).logits;
  const Tensor got = teacher_forward(t, images);
  EXPECT_TRUE(std::equal(got.data().begin(), got.data().end(), want.data().begin()));

  ema_update(t, small_model(9));
  const Tensor moved = teacher_forward(t, images);
  EXPECT_FALSE(std::equal(moved.data().begin(), moved.data().end(), want.data().begin()));
}
