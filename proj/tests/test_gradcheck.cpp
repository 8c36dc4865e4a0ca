#include <gtest/gtest.h>

#include <cctype>
#include <set>

#include "mixalign/gradcheck.hpp"

using namespace mixalign;

namespace {

const std::vector<GradCase>& cases() {
  static const std::vector<GradCase> all = standard_grad_cases();
  return all;
}

std::string test_name(const ::testing::TestParamInfo<std::size_t>& info) {
  std::string s = cases()[info.param].name;
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
  }
  return s;
}

std::vector<std::size_t> indices() {
  std::vector<std::size_t> v(cases().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  return v;
}

class GradientMatchesFiniteDifferences : public ::testing::TestWithParam<std::size_t> {};

}  // namespace

TEST_P(GradientMatchesFiniteDifferences, TwentySeeds) {
  const GradCase& c = cases()[GetParam()];
  const GradCheckResult r = check_case(c, 20);
  EXPECT_TRUE(r.passed) << c.name << " max rel error " << r.max_rel_error << " tolerance " << r.tolerance;
  EXPECT_EQ(r.seeds, 20);
}

INSTANTIATE_TEST_SUITE_P(Suite, GradientMatchesFiniteDifferences, ::testing::ValuesIn(indices()), test_name);

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 1e-3);  // floor keeps tiny gradients from dominating
}

TEST(GradCheck, CatchesAWrongAdjoint) {
  GradCase bad;
  bad.name = "wrong";
  bad.make_inputs = [](Rng& rng) { return std::vector<Tensor>{Tensor::vector({rng.uniform(1, 2), rng.uniform(1, 2)}, true)}; };
  // Forward is x^2 but detach hides one factor, so the analytic gradient is x instead of 2x.
  bad.fn = [](const std::vector<Tensor>& in, Rng&) { return sum(in[0] * in[0].detach()); };
  EXPECT_FALSE(check_case(bad, 3).passed);
}

TEST(GradCheck, SuiteCoversOpsLossesAndModel) {
  std::set<std::string> names;
  for (const auto& c : cases()) names.insert(c.name);
  for (const char* required : {"conv2d_pad1", "mixstyle_apply", "channel_attention", "spatial_attention", "cbam_forward", "alignment_loss", "kd_loss", "total_loss", "model_end_to_end"}) {
    EXPECT_TRUE(names.count(required)) << required;
  }
  EXPECT_GE(names.size(), 20u);
}
