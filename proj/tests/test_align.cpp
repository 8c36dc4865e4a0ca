#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mixalign/align_loss.hpp"
#include "test_util.hpp"

using namespace mixalign;
using testutil::random_tensor;

TEST(Descriptor, ConstantAndHandMean) {
  EXPECT_EQ(channel_descriptor(Tensor::full({1, 2, 3, 3}, 0.25)).data()[1], 0.25);
  const Tensor f({1, 1, 2, 2}, {1, 3, 5, 7});
  EXPECT_DOUBLE_EQ(channel_descriptor(f).item(), 4.0);
  Tensor g = Tensor::zeros({2, 3, 4, 4}, true);
  sum(channel_descriptor(g)).backward();
  for (double v : g.grad()) EXPECT_DOUBLE_EQ(v, 1.0 / 16.0);
}

TEST(Partition, KnownSetOrderAndMembers) {
  const std::vector<int> ids{0, 0, 2};
  const std::vector<int> known{0, 1, 2};
  const DomainPartition p = drop_absent_domains(ids, known);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.domains, (std::vector<int>{0, 2}));
  EXPECT_EQ(p.members[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(p.members[1], (std::vector<std::size_t>{2}));

  const std::vector<int> same{1, 1, 1};
  EXPECT_EQ(drop_absent_domains(same, known).size(), 1u);
  EXPECT_TRUE(drop_absent_domains(std::vector<int>{}, known).empty());
}

TEST(Partition, UnknownIdIsRejected) {
  const std::vector<int> ids{0, 5};
  const std::vector<int> known{0, 1};
  EXPECT_THROW(drop_absent_domains(ids, known), std::invalid_argument);
}

TEST(AlignmentLoss, TwoDomainHandExampleIsLog2) {
  const Tensor f({2, 1}, {1, 3});
  const std::vector<int> ids{0, 1};
  EXPECT_NEAR(alignment_loss(f, drop_absent_domains(ids, {})).item(), std::log(2.0), 1e-15);
}

TEST(AlignmentLoss, SingleDomainAndCoincidentMeansAreZero) {
  Rng rng(1);
  const Tensor f = random_tensor({5, 4}, rng);
  const std::vector<int> one{3, 3, 3, 3, 3};
  EXPECT_EQ(alignment_loss(f, drop_absent_domains(one, {})).item(), 0.0);

  // Domain 0 = {a, b}, domain 1 = {a+d, b-d}: means coincide.
  const Tensor g({4, 2}, {1.0, 2.0, 3.0, -1.0, 1.5, 1.0, 2.5, 0.0});
  const std::vector<int> ids{0, 0, 1, 1};
  EXPECT_NEAR(alignment_loss(g, drop_absent_domains(ids, {})).item(), 0.0, 1e-15);
}

TEST(AlignmentLoss, EmptyPartitionIsRejected) {
  EXPECT_THROW(alignment_loss(Tensor::zeros({0, 3}), DomainPartition{}), std::invalid_argument);
}

TEST(AlignmentLoss, PositiveWheneverMeansDiffer) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Tensor f = random_tensor({6, 3}, rng);
    const std::vector<int> ids{0, 1, 2, 0, 1, 2};
    EXPECT_GT(alignment_loss(f, drop_absent_domains(ids, {})).item(), 0.0);
  }
}

TEST(AlignmentLoss, InvariantToWithinDomainPermutationRelabelingAndShift) {
  Rng rng(3);
  const Tensor f = random_tensor({6, 3}, rng);
  const std::vector<int> ids{0, 1, 2, 0, 1, 0};
  const double base = alignment_loss(f, drop_absent_domains(ids, {})).item();

  const std::vector<std::size_t> perm{5, 1, 2, 0, 4, 3};  // swaps rows within domain 0
  std::vector<int> pids;
  for (std::size_t i : perm) pids.push_back(ids[i]);
  EXPECT_NEAR(alignment_loss(index_select(f, perm), drop_absent_domains(pids, {})).item(), base, 1e-14);

  const std::vector<int> relabeled{7, 4, 9, 7, 4, 7};
  EXPECT_NEAR(alignment_loss(f, drop_absent_domains(relabeled, {})).item(), base, 1e-14);

  const Tensor shift({3}, {10.0, -4.0, 0.5});
  EXPECT_NEAR(alignment_loss(f + shift, drop_absent_domains(ids, {})).item(), base, 1e-13);
}
